//! Component interfaces: attribute views computed from the knowledge state,
//! and predicate satisfaction `I(K) |= p`.

use std::collections::BTreeMap;
use std::fmt;

use crate::knowledge::KnowledgeState;
use crate::term::Predicate;
use crate::value::Value;

/// How an attribute is read off a knowledge state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Extraction {
    /// Field `index` of the unique item whose first field is `tag`.
    Field { tag: String, index: usize },
    /// Number of occurrences of items tagged `tag`.
    Count { tag: String },
    Const(Value),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttributeRule {
    pub name: String,
    pub extraction: Extraction,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InterfaceDef {
    pub name: String,
    pub rules: Vec<AttributeRule>,
}

impl InterfaceDef {
    /// An interface exposing only `id`.
    pub fn empty() -> Self {
        InterfaceDef {
            name: "default".into(),
            rules: Vec::new(),
        }
    }

    pub fn new(name: impl Into<String>, rules: Vec<AttributeRule>) -> Self {
        InterfaceDef {
            name: name.into(),
            rules,
        }
    }

    /// `I(K)`. Rules whose source item is missing or ambiguous leave the
    /// attribute absent. `id` is always bound to the component name.
    pub fn evaluate(&self, id: &str, k: &KnowledgeState) -> Evaluation {
        let mut attrs = BTreeMap::new();
        for rule in &self.rules {
            let value = match &rule.extraction {
                Extraction::Const(v) => Some(v.clone()),
                Extraction::Count { tag } => Some(Value::Int(k.tagged(tag).map(|(_, c)| i64::from(c)).sum())),
                Extraction::Field { tag, index } => k.unique_tagged(tag).and_then(|item| item.0.get(*index).cloned()),
            };
            if let Some(v) = value {
                attrs.insert(rule.name.clone(), v);
            }
        }
        attrs.insert("id".to_string(), Value::str(id));
        Evaluation(attrs)
    }
}

/// An interface evaluation: attribute name to value.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Evaluation(pub BTreeMap<String, Value>);

impl Evaluation {
    pub fn get(&self, attr: &str) -> Option<&Value> {
        self.0.get(attr)
    }

    pub fn id(&self) -> Option<&str> {
        self.get("id").and_then(Value::as_str)
    }

    /// `self |= p`. A comparison involving an absent attribute is false.
    pub fn satisfies(&self, p: &Predicate) -> bool {
        p.eval(&|a| self.0.get(a).cloned())
    }
}

impl fmt::Display for Evaluation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}: {v}")?;
        }
        f.write_str("}")
    }
}

pub fn evaluate(def: &InterfaceDef, id: &str, k: &KnowledgeState) -> Evaluation {
    def.evaluate(id, k)
}

pub fn satisfies(e: &Evaluation, p: &Predicate) -> bool {
    e.satisfies(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::Item;
    use crate::term::{CmpOp, Expr};
    use proptest::prelude::*;

    fn item(tag: &str, v: Value) -> Item {
        Item(vec![Value::str(tag), v])
    }

    fn field(name: &str, tag: &str) -> AttributeRule {
        AttributeRule {
            name: name.into(),
            extraction: Extraction::Field {
                tag: tag.into(),
                index: 1,
            },
        }
    }

    fn cmp(attr: &str, op: CmpOp, v: i64) -> Predicate {
        Predicate::compare(Expr::Attr(attr.into()), op, Expr::Lit(Value::Int(v)))
    }

    #[test]
    fn station_view() {
        let station = InterfaceDef::new(
            "Station",
            vec![field("bikes", "bikes"), field("slots", "slots"), field("loc", "loc")],
        );
        let k = KnowledgeState::from_items([
            item("bikes", Value::Int(5)),
            item("bikes_reserved", Value::Int(0)),
            item("slots", Value::Int(5)),
            item("slots_reserved", Value::Int(0)),
            item("loc", Value::Int(2)),
        ]);
        let e = station.evaluate("station2", &k);
        assert_eq!(e.id(), Some("station2"));
        assert_eq!(e.get("bikes"), Some(&Value::Int(5)));
        assert_eq!(e.get("slots"), Some(&Value::Int(5)));
        assert_eq!(e.get("loc"), Some(&Value::Int(2)));
    }

    #[test]
    fn user_view() {
        let user = InterfaceDef::new("User", vec![field("state", "state"), field("loc", "loc")]);
        let k = KnowledgeState::from_items([item("state", Value::str("p")), item("loc", Value::Int(1))]);
        let e = user.evaluate("u", &k);
        assert_eq!(e.get("state"), Some(&Value::str("p")));
        assert_eq!(e.get("loc"), Some(&Value::Int(1)));
        let only_id = InterfaceDef::empty().evaluate("c", &KnowledgeState::new());
        assert_eq!(only_id.0.len(), 1);
        assert_eq!(only_id.id(), Some("c"));
    }

    #[test]
    fn missing_source_leaves_attribute_absent() {
        let def = InterfaceDef::new("X", vec![field("loc", "loc")]);
        let k = KnowledgeState::from_items([item("loc", Value::Int(1)), item("loc", Value::Int(2))]);
        assert!(def.evaluate("x", &k).get("loc").is_none());
    }

    #[test]
    fn satisfaction() {
        let with = |b: i64| Evaluation([("bikes".to_string(), Value::Int(b))].into_iter().collect());
        assert!(with(5).satisfies(&cmp("bikes", CmpOp::Gt, 0)));
        assert!(!with(0).satisfies(&cmp("bikes", CmpOp::Gt, 0)));
        assert!(!Evaluation::default().satisfies(&cmp("battery", CmpOp::Lt, 3)));
        // absent attribute: the comparison is false, so its negation holds
        assert!(Evaluation::default().satisfies(&Predicate::not(cmp("battery", CmpOp::Lt, 3))));
    }

    fn arb_pred() -> impl Strategy<Value = Predicate> {
        let leaf = prop_oneof![
            Just(Predicate::True),
            (prop::sample::select(vec!["a", "b", "z"]), 0i64..4, 0usize..6).prop_map(|(a, v, op)| {
                let ops = [CmpOp::Lt, CmpOp::Le, CmpOp::Gt, CmpOp::Ge, CmpOp::Eq, CmpOp::Ne];
                cmp(a, ops[op], v)
            }),
        ];
        leaf.prop_recursive(4, 16, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(Predicate::not),
                (inner.clone(), inner).prop_map(|(p, q)| Predicate::and(p, q)),
            ]
        })
    }

    proptest! {
        #[test]
        fn satisfaction_is_a_homomorphism(a in 0i64..4, b in 0i64..4, p in arb_pred(), q in arb_pred()) {
            let e = Evaluation([("a".to_string(), Value::Int(a)), ("b".to_string(), Value::Int(b))].into_iter().collect());
            prop_assert!(e.satisfies(&Predicate::True));
            prop_assert_eq!(e.satisfies(&Predicate::not(p.clone())), !e.satisfies(&p));
            prop_assert_eq!(e.satisfies(&Predicate::and(p.clone(), q.clone())), e.satisfies(&p) && e.satisfies(&q));
        }
    }
}
