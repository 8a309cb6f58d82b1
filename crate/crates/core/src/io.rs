//! JSON model files.
//!
//! ```json
//! {"states":[...], "actions":[...],
//!  "admissible":{state:[action,...]},
//!  "transitions":{state:{action:{state:prob}}},
//!  "rewards":{state:{action:real}},
//!  "costs":{state:{action:real}},          (optional)
//!  "discount":real}
//! ```
//!
//! The canonical form written by [`to_json_string`] orders every object by the
//! declared state/action order and stores normalized probabilities.

use std::path::Path;

use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::mdp::{Choice, FiniteMdp};

fn parse_err(pointer: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse { pointer: pointer.into(), message: message.into() }
}

fn escape(token: &str) -> String {
    token.replace('~', "~0").replace('/', "~1")
}

fn field<'a>(obj: &'a Map<String, Value>, base: &str, key: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| parse_err(format!("{base}/{}", escape(key)), "missing field"))
}

fn as_object<'a>(v: &'a Value, ptr: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| parse_err(ptr, "expected an object"))
}

fn as_number(v: &Value, ptr: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| parse_err(ptr, "expected a number"))
}

fn id_list(root: &Map<String, Value>, key: &str) -> Result<Vec<String>> {
    let ptr = format!("/{key}");
    let arr = field(root, "", key)?.as_array().ok_or_else(|| parse_err(&ptr, "expected an array of ids"))?;
    arr.iter()
        .enumerate()
        .map(|(i, v)| match v {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            _ => Err(parse_err(format!("{ptr}/{i}"), "expected a string id")),
        })
        .collect()
}

/// Parses a model without checking its invariants (see [`FiniteMdp::validate`]).
pub fn from_json_value_unchecked(root: &Value) -> Result<FiniteMdp<f64>> {
    let root = as_object(root, "")?;
    let states = id_list(root, "states")?;
    let actions = id_list(root, "actions")?;
    let admissible = as_object(field(root, "", "admissible")?, "/admissible")?;
    let transitions = as_object(field(root, "", "transitions")?, "/transitions")?;
    let rewards = as_object(field(root, "", "rewards")?, "/rewards")?;
    let costs = match root.get("costs") {
        None | Some(Value::Null) => None,
        Some(v) => Some(as_object(v, "/costs")?),
    };
    let discount = as_number(field(root, "", "discount")?, "/discount")?;

    for (key, obj) in [("admissible", admissible), ("transitions", transitions), ("rewards", rewards)]
        .into_iter()
        .chain(costs.map(|c| ("costs", c)))
    {
        if let Some(bad) = obj.keys().find(|k| !states.contains(k)) {
            return Err(parse_err(format!("/{key}/{}", escape(bad)), "unknown state id"));
        }
    }

    let mut choices = Vec::with_capacity(states.len());
    for s in &states {
        let es = escape(s);
        let mut row = Vec::new();
        let Some(listed) = admissible.get(s) else {
            choices.push(row);
            continue;
        };
        let listed = listed
            .as_array()
            .ok_or_else(|| parse_err(format!("/admissible/{es}"), "expected an array of action ids"))?;
        let mut idx = Vec::with_capacity(listed.len());
        for (k, a) in listed.iter().enumerate() {
            let name = a.as_str().ok_or_else(|| parse_err(format!("/admissible/{es}/{k}"), "expected an action id"))?;
            let ai = actions
                .iter()
                .position(|x| x == name)
                .ok_or_else(|| parse_err(format!("/admissible/{es}/{k}"), "unknown action id"))?;
            if idx.contains(&ai) {
                return Err(parse_err(format!("/admissible/{es}/{k}"), "duplicate action"));
            }
            idx.push(ai);
        }
        idx.sort_unstable();
        for ai in idx {
            let an = &actions[ai];
            let ea = escape(an);
            let tptr = format!("/transitions/{es}/{ea}");
            let trow = transitions
                .get(s)
                .map(|v| as_object(v, &format!("/transitions/{es}")))
                .transpose()?
                .and_then(|o| o.get(an))
                .ok_or_else(|| parse_err(&tptr, "missing transition row for admissible pair"))?;
            let trow = as_object(trow, &tptr)?;
            if let Some(bad) = trow.keys().find(|k| !states.contains(k)) {
                return Err(parse_err(format!("{tptr}/{}", escape(bad)), "unknown successor state"));
            }
            let mut successors = Vec::with_capacity(trow.len());
            for (y, t) in states.iter().enumerate() {
                if let Some(p) = trow.get(t) {
                    successors.push((y, as_number(p, &format!("{tptr}/{}", escape(t)))?));
                }
            }
            let payoff = |table: &Map<String, Value>, name: &str| -> Result<f64> {
                let ptr = format!("/{name}/{es}/{ea}");
                let v = table
                    .get(s)
                    .map(|v| as_object(v, &format!("/{name}/{es}")))
                    .transpose()?
                    .and_then(|o| o.get(an))
                    .ok_or_else(|| parse_err(&ptr, "missing entry for admissible pair"))?;
                as_number(v, &ptr)
            };
            let reward = payoff(rewards, "rewards")?;
            let cost = costs.map(|c| payoff(c, "costs")).transpose()?;
            row.push(Choice { action: ai, reward, cost, successors });
        }
        choices.push(row);
    }
    Ok(FiniteMdp { states, actions, choices, discount })
}

/// Parses JSON text without validating invariants.
pub fn from_json_str_unchecked(text: &str) -> Result<FiniteMdp<f64>> {
    let v: Value = serde_json::from_str(text)
        .map_err(|e| parse_err("", format!("invalid JSON at line {} column {}: {e}", e.line(), e.column())))?;
    from_json_value_unchecked(&v)
}

/// Parses, validates and normalizes a model.
pub fn from_json_str(text: &str) -> Result<FiniteMdp<f64>> {
    let mut m = from_json_str_unchecked(text)?;
    m.require_valid()?;
    normalize(&mut m);
    Ok(m)
}

/// Rescales every kernel row to sum to exactly one (up to rounding).
pub fn normalize(m: &mut FiniteMdp<f64>) {
    for ch in m.choices.iter_mut().flatten() {
        let s: f64 = ch.successors.iter().map(|(_, p)| p).sum();
        if s > 0.0 && s != 1.0 {
            for (_, p) in &mut ch.successors {
                *p /= s;
            }
        }
    }
}

/// Reads and validates a model file.
pub fn load(path: impl AsRef<Path>) -> Result<FiniteMdp<f64>> {
    from_json_str(&std::fs::read_to_string(path)?)
}

/// Canonical JSON value of a model.
pub fn to_json_value(m: &FiniteMdp<f64>) -> Value {
    let mut admissible = Map::new();
    let mut transitions = Map::new();
    let mut rewards = Map::new();
    let mut costs = Map::new();
    for (x, s) in m.states.iter().enumerate() {
        let cs = &m.choices[x];
        admissible
            .insert(s.clone(), Value::Array(cs.iter().map(|c| Value::String(m.actions[c.action].clone())).collect()));
        let mut t = Map::new();
        let mut r = Map::new();
        let mut c = Map::new();
        for ch in cs {
            let an = m.actions[ch.action].clone();
            let row: Map<String, Value> =
                ch.successors.iter().map(|&(y, p)| (m.states[y].clone(), Value::from(p))).collect();
            t.insert(an.clone(), Value::Object(row));
            r.insert(an.clone(), Value::from(ch.reward));
            if let Some(cost) = ch.cost {
                c.insert(an, Value::from(cost));
            }
        }
        transitions.insert(s.clone(), Value::Object(t));
        rewards.insert(s.clone(), Value::Object(r));
        costs.insert(s.clone(), Value::Object(c));
    }
    let mut root = Map::new();
    root.insert("states".into(), Value::from(m.states.clone()));
    root.insert("actions".into(), Value::from(m.actions.clone()));
    root.insert("admissible".into(), Value::Object(admissible));
    root.insert("transitions".into(), Value::Object(transitions));
    root.insert("rewards".into(), Value::Object(rewards));
    if m.has_costs() {
        root.insert("costs".into(), Value::Object(costs));
    }
    root.insert("discount".into(), Value::from(m.discount));
    Value::Object(root)
}

/// Canonical pretty-printed JSON text, newline terminated.
pub fn to_json_string(m: &FiniteMdp<f64>) -> String {
    let mut s = serde_json::to_string_pretty(&to_json_value(m)).expect("serializable");
    s.push('\n');
    s
}

pub fn save(m: &FiniteMdp<f64>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_json_string(m))?;
    Ok(())
}
