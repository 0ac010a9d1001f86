"""TinySol: a small smart-contract language with gas, rollback and a gas-bound type system."""

from .chain import ChainState, TxReceipt, exec_transaction, genesis, run_blockchain
from .machine import Config, Terminal, run, step
from .parser import ParseError, parse_file, parse_program
from .syntax import pretty_print
from .typesys import Gamma, TypeCheckError, check_declarations, type_expr, type_stmt

__version__ = "0.1.0"

__all__ = [
    "ChainState", "TxReceipt", "exec_transaction", "genesis", "run_blockchain", "Config",
    "Terminal", "run", "step", "ParseError", "parse_file", "parse_program", "pretty_print",
    "Gamma", "TypeCheckError", "check_declarations", "type_expr", "type_stmt",
]
