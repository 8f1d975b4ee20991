//! JSON Lines ingest: one object per box,
//! `{"image_id", "class", "score"?, "x1", "y1", "x2", "y2", "difficult"?}`,
//! where `class` is a name from the class table or its index.

use std::collections::HashMap;

use serde::Deserialize;
use serde_json::Value;

use super::{BBox, Detection, GroundTruth};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassTable {
    pub names: Vec<String>,
    index: HashMap<String, usize>,
}

impl ClassTable {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.is_empty() {
            return Err(Error::param("class table is empty"));
        }
        let mut index = HashMap::new();
        for (i, n) in names.iter().enumerate() {
            if index.insert(n.clone(), i).is_some() {
                return Err(Error::param(format!("duplicate class name {n:?}")));
            }
        }
        Ok(ClassTable { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

/// A JSON array of class names.
pub fn parse_class_table(text: &str) -> Result<ClassTable> {
    let names: Vec<String> = serde_json::from_str(text).map_err(|e| Error::Line {
        line: e.line(),
        msg: format!("class table must be a JSON array of strings: {e}"),
    })?;
    ClassTable::new(names)
}

#[derive(Deserialize)]
struct Record {
    image_id: Value,
    class: Value,
    score: Option<f64>,
    x1: f64,
    y1: f64,
    x2: f64,
    y2: f64,
    #[serde(default)]
    difficult: bool,
}

struct Parsed {
    image_id: String,
    class_id: usize,
    score: Option<f64>,
    bbox: BBox,
    difficult: bool,
}

fn parse_lines(text: &str, classes: &ClassTable) -> Result<Vec<(usize, Parsed)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |msg: String| Error::Line { line, msg };
        if raw.trim().is_empty() {
            continue;
        }
        let r: Record = serde_json::from_str(raw).map_err(|e| err(e.to_string()))?;
        let image_id = match r.image_id {
            Value::String(s) => s,
            Value::Number(n) => n.to_string(),
            other => return Err(err(format!("image_id must be a string or number, got {other}"))),
        };
        let class_id = match &r.class {
            Value::String(s) => classes
                .lookup(s)
                .ok_or_else(|| err(format!("unknown class {s:?}")))?,
            Value::Number(n) => n
                .as_u64()
                .map(|v| v as usize)
                .filter(|&v| v < classes.len())
                .ok_or_else(|| err(format!("class index {n} outside the class table")))?,
            other => return Err(err(format!("class must be a name or index, got {other}"))),
        };
        let bbox = BBox::new(r.x1, r.y1, r.x2, r.y2).map_err(|e| err(e.to_string()))?;
        if let Some(s) = r.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(err(format!("score {s} outside [0, 1]")));
            }
        }
        out.push((
            line,
            Parsed {
                image_id,
                class_id,
                score: r.score,
                bbox,
                difficult: r.difficult,
            },
        ));
    }
    Ok(out)
}

/// Detections; every record needs a `score`.
pub fn parse_detections(text: &str, classes: &ClassTable) -> Result<Vec<Detection>> {
    parse_lines(text, classes)?
        .into_iter()
        .map(|(line, p)| {
            let score = p.score.ok_or(Error::Line {
                line,
                msg: "detection record without a score".into(),
            })?;
            Ok(Detection {
                image_id: p.image_id,
                class_id: p.class_id,
                score,
                bbox: p.bbox,
            })
        })
        .collect()
}

/// Ground truth; a `score` field, if present, is ignored.
pub fn parse_ground_truth(text: &str, classes: &ClassTable) -> Result<Vec<GroundTruth>> {
    Ok(parse_lines(text, classes)?
        .into_iter()
        .map(|(_, p)| GroundTruth {
            image_id: p.image_id,
            class_id: p.class_id,
            bbox: p.bbox,
            difficult: p.difficult,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> ClassTable {
        parse_class_table(r#"["chair", "table"]"#).unwrap()
    }

    #[test]
    fn parses_names_and_indices() {
        let text = "{\"image_id\":\"a\",\"class\":\"table\",\"score\":0.5,\"x1\":0,\"y1\":0,\"x2\":4,\"y2\":3}\n\n\
                    {\"image_id\":7,\"class\":0,\"score\":1,\"x1\":1,\"y1\":1,\"x2\":2,\"y2\":2}\n";
        let d = parse_detections(text, &table()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!((d[0].class_id, d[1].class_id), (1, 0));
        assert_eq!(d[1].image_id, "7");
        assert_eq!(d[0].bbox.area(), 12.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let good = r#"{"image_id":"a","class":"chair","x1":0,"y1":0,"x2":4,"y2":3}"#;
        let cases = [
            format!("{good}\n{{not json"),
            format!("{good}\n{}", good.replace("chair", "sofa")),
            format!("{good}\n{}", good.replace("\"x2\":4", "\"x2\":0")),
            format!("{good}\n{}", good.replace("\"chair\"", "5")),
        ];
        for text in &cases {
            match parse_ground_truth(text, &table()) {
                Err(Error::Line { line, .. }) => assert_eq!(line, 2, "{text}"),
                other => panic!("{other:?}"),
            }
        }
        match parse_detections(good, &table()) {
            Err(Error::Line { line: 1, msg }) => assert!(msg.contains("score")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn difficult_flag_and_duplicate_classes() {
        let text = r#"{"image_id":"a","class":"chair","x1":0,"y1":0,"x2":4,"y2":3,"difficult":true}"#;
        assert!(parse_ground_truth(text, &table()).unwrap()[0].difficult);
        assert!(parse_class_table(r#"["a","a"]"#).is_err());
        assert!(parse_class_table("[]").is_err());
    }
}
