//! Tuple-space knowledge repositories.
//!
//! Items are ground tuples, templates are tuples that may contain formal
//! fields `?x`. A knowledge state is a multiset of items kept in sorted order,
//! so equal multisets are equal values with equal hashes.
//!
//! The three repository operators are probabilistic: adding returns a
//! distribution over knowledge states, withdrawing a distribution over
//! `(remaining state, withdrawn item)` pairs and inferring a distribution over
//! items. Withdraw and infer are partial (`None` when nothing matches).

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::futs::Distribution;
use crate::value::Value;

/// A ground tuple.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Item(pub Vec<Value>);

impl Item {
    pub fn new(fields: Vec<Value>) -> Self {
        Item(fields)
    }

    pub fn fields(&self) -> &[Value] {
        &self.0
    }

    /// The first field when it is a string, used as the item's tag.
    pub fn tag(&self) -> Option<&str> {
        self.0.first().and_then(Value::as_str)
    }
}

impl fmt::Display for Item {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{v}")?;
        }
        f.write_str(">")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemplateField {
    Value(Value),
    Formal(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Template(pub Vec<TemplateField>);

impl Template {
    pub fn fields(&self) -> &[TemplateField] {
        &self.0
    }

    pub fn tag(&self) -> Option<&str> {
        match self.0.first() {
            Some(TemplateField::Value(v)) => v.as_str(),
            _ => None,
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("<")?;
        for (i, field) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            match field {
                TemplateField::Value(v) => write!(f, "{v}")?,
                TemplateField::Formal(x) => write!(f, "?{x}")?,
            }
        }
        f.write_str(">")
    }
}

/// Finite map from variable names to ground values.
pub type Substitution = BTreeMap<String, Value>;

/// Matches a template against an item. `None` means the match is undefined.
pub fn match_template(template: &Template, item: &Item) -> Option<Substitution> {
    if template.0.len() != item.0.len() {
        return None;
    }
    let mut theta = Substitution::new();
    for (field, value) in template.0.iter().zip(&item.0) {
        match field {
            TemplateField::Value(v) if v == value => {}
            TemplateField::Value(_) => return None,
            TemplateField::Formal(x) => match theta.get(x) {
                Some(bound) if bound != value => return None,
                Some(_) => {}
                None => {
                    theta.insert(x.clone(), value.clone());
                }
            },
        }
    }
    Some(theta)
}

/// A multiset of items in canonical (sorted) form.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KnowledgeState {
    entries: Vec<(Item, u32)>,
}

impl KnowledgeState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_items<I: IntoIterator<Item = Item>>(items: I) -> Self {
        let mut k = Self::new();
        for it in items {
            k.insert(it);
        }
        k
    }

    pub fn insert(&mut self, item: Item) {
        match self.entries.binary_search_by(|(i, _)| i.cmp(&item)) {
            Ok(pos) => self.entries[pos].1 += 1,
            Err(pos) => self.entries.insert(pos, (item, 1)),
        }
    }

    /// Removes one occurrence; returns false when the item is absent.
    pub fn remove_one(&mut self, item: &Item) -> bool {
        match self.entries.binary_search_by(|(i, _)| i.cmp(item)) {
            Ok(pos) => {
                if self.entries[pos].1 == 1 {
                    self.entries.remove(pos);
                } else {
                    self.entries[pos].1 -= 1;
                }
                true
            }
            Err(_) => false,
        }
    }

    pub fn count(&self, item: &Item) -> u32 {
        self.entries
            .binary_search_by(|(i, _)| i.cmp(item))
            .map(|pos| self.entries[pos].1)
            .unwrap_or(0)
    }

    /// Distinct items with their multiplicities, in canonical order.
    pub fn entries(&self) -> impl Iterator<Item = (&Item, u32)> {
        self.entries.iter().map(|(i, c)| (i, *c))
    }

    /// All occurrences, repeated according to multiplicity.
    pub fn items(&self) -> impl Iterator<Item = &Item> {
        self.entries
            .iter()
            .flat_map(|(i, c)| std::iter::repeat_n(i, *c as usize))
    }

    /// Items whose first field is the string `tag`.
    pub fn tagged<'a>(&'a self, tag: &'a str) -> impl Iterator<Item = (&'a Item, u32)> + 'a {
        self.entries().filter(move |(i, _)| i.tag() == Some(tag))
    }

    /// The single item tagged `tag`, if exactly one occurrence exists.
    pub fn unique_tagged<'a>(&'a self, tag: &'a str) -> Option<&'a Item> {
        let mut it = self.tagged(tag);
        match (it.next(), it.next()) {
            (Some((item, 1)), None) => Some(item),
            _ => None,
        }
    }

    /// Replaces every item tagged `tag` by `item`.
    pub fn set_tagged(&mut self, tag: &str, item: Item) {
        self.entries.retain(|(i, _)| i.tag() != Some(tag));
        self.insert(item);
    }

    pub fn len(&self) -> usize {
        self.entries.iter().map(|(_, c)| *c as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl fmt::Display for KnowledgeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, item) in self.items().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{item}")?;
        }
        f.write_str("]")
    }
}

/// Tuple-space insertion: the Dirac distribution on `K` plus one `t`.
pub fn oplus(k: &KnowledgeState, t: &Item) -> Distribution<KnowledgeState> {
    let mut next = k.clone();
    next.insert(t.clone());
    Distribution::dirac(next)
}

/// Tuple-space withdrawal: uniform over matching occurrences.
pub fn ominus(k: &KnowledgeState, template: &Template) -> Option<Distribution<(KnowledgeState, Item)>> {
    let matching: Vec<(&Item, u32)> = k
        .entries()
        .filter(|(i, _)| match_template(template, i).is_some())
        .collect();
    let total: u32 = matching.iter().map(|(_, c)| c).sum();
    if total == 0 {
        return None;
    }
    let pairs = matching.into_iter().map(|(item, c)| {
        let mut rest = k.clone();
        rest.remove_one(item);
        ((rest, item.clone()), f64::from(c) / f64::from(total))
    });
    Some(Distribution::from_pairs(pairs).expect("uniform weights sum to one"))
}

/// Tuple-space inference: read-only lookup, uniform over matching occurrences.
pub fn infer(k: &KnowledgeState, template: &Template) -> Option<Distribution<Item>> {
    ominus(k, template).map(|d| d.map(|(_, item)| item.clone()))
}

/// The repository operators a component's knowledge is manipulated with.
///
/// Implementations must return genuine probability distributions and keep
/// `withdraw`/`infer` defined on exactly the same inputs.
pub trait Repository: Send + Sync + fmt::Debug {
    fn kind(&self) -> &str;

    fn add(&self, k: &KnowledgeState, item: &Item) -> Distribution<KnowledgeState>;

    fn withdraw(&self, k: &KnowledgeState, template: &Template) -> Option<Distribution<(KnowledgeState, Item)>>;

    fn infer(&self, k: &KnowledgeState, template: &Template) -> Option<Distribution<Item>>;
}

/// The default Linda-style repository.
#[derive(Debug, Default, Clone, Copy)]
pub struct TupleSpace;

impl TupleSpace {
    pub fn shared() -> Arc<dyn Repository> {
        Arc::new(TupleSpace)
    }
}

impl Repository for TupleSpace {
    fn kind(&self) -> &str {
        "tuplespace"
    }

    fn add(&self, k: &KnowledgeState, item: &Item) -> Distribution<KnowledgeState> {
        oplus(k, item)
    }

    fn withdraw(&self, k: &KnowledgeState, template: &Template) -> Option<Distribution<(KnowledgeState, Item)>> {
        ominus(k, template)
    }

    fn infer(&self, k: &KnowledgeState, template: &Template) -> Option<Distribution<Item>> {
        infer(k, template)
    }
}
