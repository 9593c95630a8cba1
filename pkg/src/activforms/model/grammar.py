"""LALR grammar for the model container format and the query language."""

GRAMMAR = r"""
model: _item*

_item: var_decl
     | typedef_decl
     | function
     | automaton
     | instance
     | system
     | query_decl
     | lineage

// ------------------------------------------------------------------ declarations

var_decl: type_spec var_item ("," var_item)* ";"
var_item: NAME dim* ["=" initializer]
dim: "[" expr "]"
?initializer: expr
            | "{" initializer ("," initializer)* "}"   -> list_init

typedef_decl: "typedef" type_spec NAME dim* ";"

type_spec: type_prefix* base_type
!type_prefix: "const" | "urgent" | "broadcast" | "meta"
base_type: "int" [range]                  -> int_type
         | "bool"                         -> bool_type
         | "clock"                        -> clock_type
         | "chan"                         -> chan_type
         | "double"                       -> double_type
         | "void"                         -> void_type
         | "struct" "{" field_decl+ "}"   -> struct_type
         | "scalar" "[" expr "]"          -> scalar_type
         | NAME                           -> named_type
range: "[" expr "," expr "]"
field_decl: type_spec NAME dim* ("," NAME dim*)* ";"

function: type_spec NAME "(" [params] ")" block
params: param ("," param)*
param: type_spec [ref_marker] NAME dim*
!ref_marker: "&"

// ------------------------------------------------------------------ statements

block: "{" _stmt_item* "}"
_stmt_item: var_decl | typedef_decl | statement
?statement: block
          | expr ";"                                              -> expr_stmt
          | ";"                                                   -> empty_stmt
          | "if" "(" expr ")" statement ["else" statement]        -> if_stmt
          | "while" "(" expr ")" statement                        -> while_stmt
          | "do" statement "while" "(" expr ")" ";"               -> do_stmt
          | "for" "(" [expr] ";" [expr] ";" [expr] ")" statement  -> for_stmt
          | "for" "(" NAME ":" type_spec ")" statement            -> iterate_stmt
          | "return" [expr] ";"                                   -> return_stmt

// ------------------------------------------------------------------ automata

automaton: "automaton" NAME automaton_params? "{" _automaton_item* "}"
automaton_params: "(" [params] ")"
_automaton_item: var_decl | typedef_decl | function | location | branchpoint | edge

location: "location" NAME location_flag* (";" | "{" _location_item* "}")
!location_flag: "initial" | "committed" | "urgent"
_location_item: invariant | rate
invariant: "invariant" expr ";"
rate: "rate" expr ";"

branchpoint: "branchpoint" NAME ";"

edge: "edge" NAME "->" NAME (";" | "{" _edge_item* "}")
_edge_item: guard | sync | update | weight
guard: "guard" expr ";"
sync: "sync" NAME ["[" expr "]"] sync_dir ";"
!sync_dir: "!" | "?"
update: "update" expr ("," expr)* ";"
weight: "weight" expr ";"

instance: "instance" NAME "=" NAME "(" [args] ")" ";"
system: "system" NAME ("," NAME)* ";"
query_decl: "query" [NAME] ESCAPED_STRING ";"

lineage: "lineage" "{" lineage_entry* "}"
lineage_entry: NAME ["." NAME] "=" TEMPLATE_REF ";"

// ------------------------------------------------------------------ queries

query: "Pr" "[" "<=" expr "]" "(" "<>" expr ")"                    -> probability_query
     | "simulate" INT "[" "<=" expr "]" "{" expr ("," expr)* "}"   -> simulation_query
     | "simulate" INT "[" "<=" expr "]" "(" expr ("," expr)* ")"   -> simulation_query
     | A_ALL "no" "deadlock"                                       -> deadlock_query
     | A_ALL expr                                                  -> invariant_query
     | E_EXISTS expr                                               -> reachability_query
     | expr "-->" expr                                             -> leadsto_query

// ------------------------------------------------------------------ expressions

?expr: assign
?assign: ternary
       | postfix assign_op assign                 -> assign
!assign_op: "=" | ":=" | "+=" | "-=" | "*=" | "/=" | "%=" | "|=" | "&=" | "^=" | "<<=" | ">>="
?ternary: imply
        | imply "?" assign ":" ternary            -> ternary
?imply: or_expr
      | imply "imply" or_expr                     -> imply
?or_expr: and_expr
        | or_expr or_op and_expr                  -> binary
!or_op: "||" | "or"
?and_expr: bitor
         | and_expr and_op bitor                  -> binary
!and_op: "&&" | "and"
?bitor: bitxor
      | bitor bitor_op bitxor                     -> binary
!bitor_op: "|"
?bitxor: bitand
       | bitxor bitxor_op bitand                  -> binary
!bitxor_op: "^"
?bitand: equality
       | bitand bitand_op equality                -> binary
!bitand_op: "&"
?equality: relational
         | equality eq_op relational              -> binary
!eq_op: "==" | "!="
?relational: minmax
           | relational rel_op minmax             -> binary
!rel_op: "<" | "<=" | ">" | ">="
?minmax: shift
       | minmax minmax_op shift                   -> binary
!minmax_op: "<?" | ">?"
?shift: additive
      | shift shift_op additive                   -> binary
!shift_op: "<<" | ">>"
?additive: multiplicative
         | additive add_op multiplicative         -> binary
!add_op: "+" | "-"
?multiplicative: unary
               | multiplicative mul_op unary      -> binary
!mul_op: "*" | "/" | "%"
?unary: postfix
      | unary_op unary                            -> unary
      | "++" unary                                -> preinc
      | "--" unary                                -> predec
      | quant_op "(" NAME ":" type_spec ")" unary -> quantifier
!unary_op: "-" | "+" | "!" | "not"
!quant_op: "forall" | "exists" | "sum"
?postfix: atom
        | postfix "[" expr "]"                    -> index
        | postfix "." NAME                        -> field
        | postfix "(" [args] ")"                  -> call
        | postfix "++"                            -> postinc
        | postfix "--"                            -> postdec
args: assign ("," assign)*
?atom: INT                                        -> int_lit
     | FLOAT                                      -> float_lit
     | "true"                                     -> true_lit
     | "false"                                    -> false_lit
     | NAME                                       -> name
     | SLOT                                       -> slot
     | "(" expr ")"

// ------------------------------------------------------------------ terminals

A_ALL.2: "A[]"
E_EXISTS.2: "E<>"
TEMPLATE_REF: /\[[A-Za-z_][A-Za-z0-9_]*\]|<[A-Za-z_][A-Za-z0-9_]*>/
NAME: /[A-Za-z_][A-Za-z0-9_]*/
FLOAT: /[0-9]+\.[0-9]+([eE][-+]?[0-9]+)?|[0-9]+[eE][-+]?[0-9]+/
INT: /[0-9]+/
SLOT: /\$[A-Za-z_][A-Za-z0-9_]*/
LINE_COMMENT: /\/\/[^\n]*/
BLOCK_COMMENT: /\/\*(.|\n)*?\*\//

%import common.ESCAPED_STRING
%import common.WS
%ignore WS
%ignore LINE_COMMENT
%ignore BLOCK_COMMENT
"""
