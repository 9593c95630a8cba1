#!/usr/bin/env python
"""
Update bundles: a zip archive with the new feedback-loop model, its goals,
the verification report of the model and a manifest holding the report's
SHA-256.

    manifest.yaml   model, goals, report file names; report_sha256; created
    model.ta        feedback-loop model
    goals.txt       goal lines
    report.csv      verification suite report (property, verdict, states, millis)

USAGE EXAMPLES:
    create_bundle('updates/latency.zip', 'models/deltaiot_mape_latency.ta',
                  'configs/goals_latency.txt', 'results/verification/latency.csv')
    bundle = load_bundle('updates/latency.zip')
    bundle.check_report()
"""

import hashlib
import io
import logging
import zipfile
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Dict, Union

import pandas as pd
import yaml

from src.activforms.checker.properties import HOLDS
from src.activforms.update.errors import MissingVerificationReport, UpdateParseError

logger = logging.getLogger(__name__)

MANIFEST = 'manifest.yaml'
MODEL, GOALS, REPORT = 'model.ta', 'goals.txt', 'report.csv'


def sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


@dataclass(frozen=True)
class UpdateBundle:
    model_text: str
    goals_text: str
    report_bytes: bytes
    manifest: Dict
    source: str = '<bundle>'

    @property
    def report(self) -> pd.DataFrame:
        return pd.read_csv(io.BytesIO(self.report_bytes))

    def check_report(self) -> pd.DataFrame:
        """
        Raises:
            MissingVerificationReport: no report, a hash mismatch, or a
                property that does not hold
        """
        if not self.report_bytes:
            raise MissingVerificationReport(f"{self.source}: no verification report")
        if self.manifest.get('report_sha256') != sha256(self.report_bytes):
            raise MissingVerificationReport(f"{self.source}: report does not match the manifest hash")
        report = self.report
        if report.empty or 'verdict' not in report.columns:
            raise MissingVerificationReport(f"{self.source}: report lists no verdicts")
        failed = report.loc[report['verdict'] != HOLDS, 'property'].tolist()
        if failed:
            raise MissingVerificationReport(f"{self.source}: properties not verified: {failed}")
        return report


def create_bundle(output: Union[str, Path], model: Union[str, Path], goals: Union[str, Path],
                  report: Union[str, Path]) -> Path:
    """Write an update bundle from a model file, a goals file and a report CSV."""
    output = Path(output)
    output.parent.mkdir(parents=True, exist_ok=True)
    report_bytes = Path(report).read_bytes()
    manifest = {
        'model': MODEL, 'goals': GOALS, 'report': REPORT,
        'source_model': str(model),
        'report_sha256': sha256(report_bytes),
        'created': datetime.now().isoformat(timespec='seconds'),
    }
    with zipfile.ZipFile(output, 'w', compression=zipfile.ZIP_DEFLATED) as archive:
        archive.writestr(MANIFEST, yaml.safe_dump(manifest, sort_keys=True))
        archive.writestr(MODEL, Path(model).read_text())
        archive.writestr(GOALS, Path(goals).read_text())
        archive.writestr(REPORT, report_bytes)
    logger.info(f"Update bundle written to {output}")
    return output


def load_bundle(path: Union[str, Path]) -> UpdateBundle:
    """
    Read a bundle.

    Raises:
        UpdateParseError: not a zip archive, or a manifest or member is missing
    """
    path = Path(path)
    try:
        with zipfile.ZipFile(path) as archive:
            names = set(archive.namelist())
            if MANIFEST not in names:
                raise UpdateParseError(f"{path}: no {MANIFEST}")
            manifest = yaml.safe_load(archive.read(MANIFEST)) or {}
            model_name, goals_name = manifest.get('model', MODEL), manifest.get('goals', GOALS)
            report_name = manifest.get('report', REPORT)
            for member in (model_name, goals_name):
                if member not in names:
                    raise UpdateParseError(f"{path}: missing {member}")
            report_bytes = archive.read(report_name) if report_name in names else b''
            return UpdateBundle(model_text=archive.read(model_name).decode(),
                                goals_text=archive.read(goals_name).decode(),
                                report_bytes=report_bytes, manifest=manifest, source=str(path))
    except (zipfile.BadZipFile, yaml.YAMLError) as e:
        raise UpdateParseError(f"{path}: {e}") from e
