use std::fmt;

use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, Node};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub feature: usize,
    pub name: String,
    pub op: Op,
    pub threshold: f64,
}

impl Predicate {
    pub fn holds(&self, row: &[f64]) -> bool {
        match self.op {
            Op::Le => row[self.feature] <= self.threshold,
            Op::Gt => row[self.feature] > self.threshold,
        }
    }
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let op = match self.op {
            Op::Le => "<=",
            Op::Gt => ">",
        };
        write!(f, "{} {} {:.2}", self.name, op, self.threshold)
    }
}

/// One root-to-leaf path of a tree.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub predicates: Vec<Predicate>,
    pub class: i32,
    /// Evaluation records reaching this leaf.
    pub support: usize,
    /// Share of supported evaluation records whose label equals `class`;
    /// `None` without support.
    pub precision: Option<f64>,
}

impl Rule {
    pub fn matches(&self, row: &[f64]) -> bool {
        self.predicates.iter().all(|p| p.holds(row))
    }
}

impl fmt::Display for Rule {
    /// `a <= 0.50 & b > 43.50; [class: -1]`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.predicates.is_empty() {
            f.write_str("true")?;
        }
        for (k, p) in self.predicates.iter().enumerate() {
            if k > 0 {
                f.write_str(" & ")?;
            }
            write!(f, "{p}")?;
        }
        write!(f, "; [class: {}]", self.class)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleSet {
    pub rules: Vec<Rule>,
    /// Set when the set is empty for a reason worth reporting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl RuleSet {
    /// Class of the first matching rule.
    pub fn predict_row(&self, row: &[f64]) -> Option<i32> {
        self.rules.iter().find(|r| r.matches(row)).map(|r| r.class)
    }

    /// One rule per line; an empty set renders as a single comment line.
    pub fn to_text(&self) -> String {
        if self.rules.is_empty() {
            return format!("# no rules: {}\n", self.note.as_deref().unwrap_or("empty rule set"));
        }
        let mut out = String::new();
        for r in &self.rules {
            out.push_str(&r.to_string());
            out.push('\n');
        }
        out
    }
}

/// Turns every leaf of `tree` into a rule, measuring support and precision
/// on `(eval_x, eval_y)`. Rules come out in depth-first (left-first) order.
pub fn extract_rules(
    tree: &DecisionTree,
    column_names: &[String],
    eval_x: &Matrix,
    eval_y: &[i32],
) -> Result<RuleSet> {
    if column_names.len() != tree.n_features {
        return Err(Error::Dimension {
            expected: tree.n_features,
            got: column_names.len(),
        });
    }
    eval_x.check_cols(tree.n_features)?;
    if eval_y.len() != eval_x.rows() {
        return Err(Error::Dimension {
            expected: eval_x.rows(),
            got: eval_y.len(),
        });
    }
    let mut leaf_rule = vec![usize::MAX; tree.nodes.len()];
    let mut rules = Vec::new();
    let mut stack: Vec<(usize, Vec<Predicate>)> = vec![(0, Vec::new())];
    while let Some((at, path)) = stack.pop() {
        match &tree.nodes[at] {
            Node::Leaf { class, .. } => {
                leaf_rule[at] = rules.len();
                rules.push(Rule {
                    predicates: path,
                    class: *class,
                    support: 0,
                    precision: None,
                });
            }
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                let mk = |op| Predicate {
                    feature: *feature,
                    name: column_names[*feature].clone(),
                    op,
                    threshold: *threshold,
                };
                let mut r = path.clone();
                r.push(mk(Op::Gt));
                stack.push((*right, r));
                let mut l = path;
                l.push(mk(Op::Le));
                stack.push((*left, l));
            }
        }
    }
    let mut hits = vec![0usize; rules.len()];
    for i in 0..eval_x.rows() {
        let k = leaf_rule[tree.leaf_index(eval_x.row(i))];
        rules[k].support += 1;
        if eval_y[i] == rules[k].class {
            hits[k] += 1;
        }
    }
    for (r, h) in rules.iter_mut().zip(hits) {
        r.precision = (r.support > 0).then(|| h as f64 / r.support as f64);
    }
    Ok(RuleSet { rules, note: None })
}
