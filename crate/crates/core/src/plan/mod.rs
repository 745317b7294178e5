//! The plan language: a closed, straight-line DSL of tool calls and score-map arithmetic.
//!
//! ```
//! use planopt::plan::{parse_plan, render_plan};
//!
//! let plan = parse_plan("param w=0.7; let a = ComputeExactMatchScore(query, candidates); return a").unwrap();
//! assert_eq!(
//!     render_plan(&plan),
//!     "param w = 0.7\nlet a = ComputeExactMatchScore(query, candidates)\nreturn a\n"
//! );
//! assert_eq!(parse_plan(&render_plan(&plan)).unwrap(), plan);
//! ```

mod ast;
mod exec;
mod parser;
mod render;
mod validate;

pub use ast::{Action, Arg, BinOp, CombineOp, Comparator, Expr, Param, Plan, Span, Statement, StatementKind};
pub use exec::{
    execute_plan, execute_plan_logged, normalize, DebugRecord, ExecBudget, ExecEnv, ExecError, ExecLog, TimeoutReason,
};
pub use parser::{is_keyword, parse_plan, SyntaxError};
pub use render::{render_expr, render_plan, render_statement};
pub use validate::{validate_plan, Violation, ViolationKind};

/// Grammar summary shown to the actor.
pub const PLAN_LANGUAGE_SUMMARY: &str = "\
Plan language: write one statement per line.
  param NAME = NUMBER                 declare a tunable parameter with its default value
  let VAR = ToolName(ARG, ...)        call a tool from the API list
  let VAR = weighted_sum([V1, V2], [E1, E2])   weighted sum of score maps
  let VAR = max([V1, V2]) | min([V1, V2]) | product([V1, V2])   element-wise combination of score maps
  let VAR = normalize(V)              rescale a score map to [0, 1]
  let VAR = filter(V, >= E)           zero every score below E (also `>`)
  let VAR = scale(V, E)               multiply every score by E
  debug(\"label\", V)                   record an intermediate value
  return VAR                          the final score map; must be the last line
Arguments are string literals in double quotes, numbers, `query` (the query text), `candidates` (the candidate node ids), variables, or [...] lists.
Expressions E use numbers, parameter names, + - * / and parentheses. Lines starting with # are comments.
Every tool that returns score_map yields one score per candidate. Variables are assigned once.
";
