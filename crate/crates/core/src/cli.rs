//! Instance file format and serialization helpers for the command-line
//! front end. Rationals travel as strings ("num/den" or a plain integer) so
//! no value is ever rounded on the way in or out.

use serde_json::{json, Map, Value};

use crate::error::Error;
use crate::matroid::{LaminarSet, MatroidOracle};
use crate::model::{format_rat, parse_rat, ElementSpec, OlcpmInstance, OutcomeDistribution, Rat, UpmInstance};

#[derive(Debug, Clone)]
pub enum ParsedInstance {
    Olcpm(OlcpmInstance),
    Upm(UpmInstance),
}

impl ParsedInstance {
    pub fn kind(&self) -> &'static str {
        match self {
            ParsedInstance::Olcpm(_) => "olcpm",
            ParsedInstance::Upm(_) => "upm",
        }
    }
}

fn validation(msgs: Vec<String>) -> Error {
    Error::Validation(msgs)
}

fn field<'a>(obj: &'a Value, key: &str, ctx: &str) -> Result<&'a Value, Error> {
    obj.get(key)
        .ok_or_else(|| validation(vec![format!("{ctx}: missing field {key:?}")]))
}

fn as_usize(v: &Value, ctx: &str) -> Result<usize, Error> {
    v.as_u64()
        .map(|x| x as usize)
        .ok_or_else(|| validation(vec![format!("{ctx}: expected a non-negative integer")]))
}

fn as_rat(v: &Value, ctx: &str) -> Result<Rat, Error> {
    let text = v
        .as_str()
        .ok_or_else(|| validation(vec![format!("{ctx}: rationals must be strings")]))?;
    parse_rat(text).map_err(|_| validation(vec![format!("{ctx}: cannot parse rational {text:?}")]))
}

fn parse_matroid(v: &Value) -> Result<MatroidOracle, Error> {
    let ctx = "matroid";
    let ty = field(v, "type", ctx)?
        .as_str()
        .ok_or_else(|| validation(vec![format!("{ctx}.type: expected a string")]))?;
    match ty {
        "uniform" => Ok(MatroidOracle::Uniform {
            n: as_usize(field(v, "n", ctx)?, "matroid.n")?,
            rank: as_usize(field(v, "rank", ctx)?, "matroid.rank")?,
        }),
        "partition" => {
            let blocks_v = field(v, "blocks", ctx)?
                .as_array()
                .ok_or_else(|| validation(vec!["matroid.blocks: expected an array".into()]))?;
            let mut blocks = Vec::new();
            for (bi, b) in blocks_v.iter().enumerate() {
                let items = b.as_array().ok_or_else(|| {
                    validation(vec![format!("matroid.blocks[{bi}]: expected an array")])
                })?;
                let mut block = Vec::new();
                for (ei, e) in items.iter().enumerate() {
                    block.push(as_usize(e, &format!("matroid.blocks[{bi}][{ei}]"))?);
                }
                blocks.push(block);
            }
            let caps_v = field(v, "capacities", ctx)?
                .as_array()
                .ok_or_else(|| validation(vec!["matroid.capacities: expected an array".into()]))?;
            let mut capacities = Vec::new();
            for (ci, c) in caps_v.iter().enumerate() {
                capacities.push(as_usize(c, &format!("matroid.capacities[{ci}]"))?);
            }
            Ok(MatroidOracle::Partition { blocks, capacities })
        }
        "laminar" => {
            let n = as_usize(field(v, "n", ctx)?, "matroid.n")?;
            let sets_v = field(v, "sets", ctx)?
                .as_array()
                .ok_or_else(|| validation(vec!["matroid.sets: expected an array".into()]))?;
            let mut sets = Vec::new();
            for (si, s) in sets_v.iter().enumerate() {
                let sc = format!("matroid.sets[{si}]");
                let items = field(s, "elements", &sc)?
                    .as_array()
                    .ok_or_else(|| validation(vec![format!("{sc}.elements: expected an array")]))?;
                let mut elements = Vec::new();
                for (ei, e) in items.iter().enumerate() {
                    elements.push(as_usize(e, &format!("{sc}.elements[{ei}]"))?);
                }
                let capacity = as_usize(field(s, "capacity", &sc)?, &format!("{sc}.capacity"))?;
                sets.push(LaminarSet { elements, capacity });
            }
            Ok(MatroidOracle::Laminar { n, sets })
        }
        "graphic" => {
            let vertices = as_usize(field(v, "vertices", ctx)?, "matroid.vertices")?;
            let edges_v = field(v, "edges", ctx)?
                .as_array()
                .ok_or_else(|| validation(vec!["matroid.edges: expected an array".into()]))?;
            let mut edges = Vec::new();
            for (ei, e) in edges_v.iter().enumerate() {
                let pair = e.as_array().filter(|a| a.len() == 2).ok_or_else(|| {
                    validation(vec![format!("matroid.edges[{ei}]: expected a pair [u, v]")])
                })?;
                edges.push((
                    as_usize(&pair[0], &format!("matroid.edges[{ei}][0]"))?,
                    as_usize(&pair[1], &format!("matroid.edges[{ei}][1]"))?,
                ));
            }
            Ok(MatroidOracle::Graphic { vertices, edges })
        }
        other => Err(validation(vec![format!(
            "matroid.type: unknown type {other:?} (expected uniform, partition, laminar, or graphic)"
        )])),
    }
}

pub fn parse_instance(text: &str) -> Result<ParsedInstance, Error> {
    let doc: Value = serde_json::from_str(text)
        .map_err(|e| validation(vec![format!("syntax: {e}")]))?;
    let kind = field(&doc, "kind", "top level")?
        .as_str()
        .ok_or_else(|| validation(vec!["kind: expected a string".into()]))?;
    let matroid = parse_matroid(field(&doc, "matroid", "top level")?)?;
    match kind {
        "olcpm" => {
            let elems_v = field(&doc, "elements", "top level")?
                .as_array()
                .ok_or_else(|| validation(vec!["elements: expected an array".into()]))?;
            let mut elements = Vec::new();
            for (i, e) in elems_v.iter().enumerate() {
                let ec = format!("elements[{i}]");
                let cost = as_rat(field(e, "cost", &ec)?, &format!("{ec}.cost"))?;
                let outs_v = field(e, "outcomes", &ec)?
                    .as_array()
                    .ok_or_else(|| validation(vec![format!("{ec}.outcomes: expected an array")]))?;
                let mut outcomes = Vec::new();
                for (k, o) in outs_v.iter().enumerate() {
                    let oc = format!("{ec}.outcomes[{k}]");
                    outcomes.push((
                        as_rat(field(o, "value", &oc)?, &format!("{oc}.value"))?,
                        as_rat(field(o, "prob", &oc)?, &format!("{oc}.prob"))?,
                    ));
                }
                elements.push(ElementSpec {
                    cost,
                    dist: OutcomeDistribution::new(outcomes),
                });
            }
            let inst = OlcpmInstance::new(matroid, elements);
            let problems = crate::model::validate_olcpm(&inst);
            if !problems.is_empty() {
                return Err(validation(problems));
            }
            Ok(ParsedInstance::Olcpm(inst))
        }
        "upm" => {
            let special = as_usize(field(&doc, "special", "top level")?, "special")?;
            let probs_v = field(&doc, "probs", "top level")?
                .as_object()
                .ok_or_else(|| validation(vec!["probs: expected an object".into()]))?;
            let n = matroid.n();
            let mut probs = vec![Rat::from_integer(0.into()); n];
            for (key, val) in probs_v {
                let idx: usize = key.parse().map_err(|_| {
                    validation(vec![format!("probs: key {key:?} is not an element index")])
                })?;
                if idx >= n {
                    return Err(validation(vec![format!(
                        "probs: index {idx} out of range for {n} elements"
                    )]));
                }
                probs[idx] = as_rat(val, &format!("probs[{key}]"))?;
            }
            let inst = UpmInstance {
                matroid,
                special,
                probs,
            };
            let problems = crate::model::validate_upm(&inst);
            if !problems.is_empty() {
                return Err(validation(problems));
            }
            Ok(ParsedInstance::Upm(inst))
        }
        other => Err(validation(vec![format!(
            "kind: unknown kind {other:?} (expected olcpm or upm)"
        )])),
    }
}

pub fn matroid_to_value(m: &MatroidOracle) -> Value {
    match m {
        MatroidOracle::Uniform { n, rank } => json!({"type": "uniform", "n": n, "rank": rank}),
        MatroidOracle::Partition { blocks, capacities } => {
            json!({"type": "partition", "blocks": blocks, "capacities": capacities})
        }
        MatroidOracle::Laminar { n, sets } => json!({
            "type": "laminar",
            "n": n,
            "sets": sets
                .iter()
                .map(|s| json!({"elements": s.elements, "capacity": s.capacity}))
                .collect::<Vec<_>>(),
        }),
        MatroidOracle::Graphic { vertices, edges } => json!({
            "type": "graphic",
            "vertices": vertices,
            "edges": edges.iter().map(|(u, v)| json!([u, v])).collect::<Vec<_>>(),
        }),
        MatroidOracle::ParallelExtension { base, map } => json!({
            "type": "parallel-extension",
            "base": matroid_to_value(base),
            "map": map,
        }),
    }
}

pub fn olcpm_to_value(inst: &OlcpmInstance) -> Value {
    let mut doc = Map::new();
    doc.insert("kind".into(), Value::String("olcpm".into()));
    doc.insert("matroid".into(), matroid_to_value(&inst.matroid));
    doc.insert(
        "elements".into(),
        Value::Array(
            inst.elements
                .iter()
                .map(|e| {
                    json!({
                        "cost": format_rat(&e.cost),
                        "outcomes": e
                            .dist
                            .outcomes
                            .iter()
                            .map(|(v, p)| json!({"value": format_rat(v), "prob": format_rat(p)}))
                            .collect::<Vec<_>>(),
                    })
                })
                .collect(),
        ),
    );
    Value::Object(doc)
}

pub fn upm_to_value(inst: &UpmInstance) -> Value {
    let mut probs = Map::new();
    for (i, p) in inst.probs.iter().enumerate() {
        probs.insert(i.to_string(), Value::String(format_rat(p)));
    }
    let mut doc = Map::new();
    doc.insert("kind".into(), Value::String("upm".into()));
    doc.insert("matroid".into(), matroid_to_value(&inst.matroid));
    doc.insert("special".into(), json!(inst.special));
    doc.insert("probs".into(), Value::Object(probs));
    Value::Object(doc)
}
