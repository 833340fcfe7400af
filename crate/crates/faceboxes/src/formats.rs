//! Plain-text formats: annotations, detections, anchor dumps, targets and evaluation reports.
//!
//! Annotations:
//! ```text
//! image <path> <w> <h>
//! face <x_min> <y_min> <x_max> <y_max>
//!
//! image ...
//! ```
//!
//! Detections (one block per image, several blocks may share a file):
//! ```text
//! image <path> w <w> h <h> count <n>
//! <x_min> <y_min> <x_max> <y_max> <score>
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use faceboxes_core::anchors::AnchorSet;
use faceboxes_core::bbox::BBox;
use faceboxes_core::evaluate::EvalResult;
use faceboxes_core::postprocess::Detection;
use faceboxes_core::targets::{Label, TrainingTargets};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedImage {
    pub path: String,
    pub width: usize,
    pub height: usize,
    pub faces: Vec<BBox>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, path: &Path, line: usize, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::parse(path, line, format!("expected {what}")))
}

fn parse_box<'a>(toks: &mut impl Iterator<Item = &'a str>, path: &Path, line: usize) -> Result<BBox> {
    let mut v = [0.0f32; 4];
    for (i, name) in ["x_min", "y_min", "x_max", "y_max"].iter().enumerate() {
        v[i] = parse_num(toks.next(), path, line, name)?;
    }
    let b = BBox::new(v[0], v[1], v[2], v[3]);
    if !b.is_valid() {
        return Err(Error::parse(path, line, "box corners out of order"));
    }
    Ok(b)
}

pub fn parse_annotations(text: &str, path: &Path) -> Result<Vec<AnnotatedImage>> {
    let mut out: Vec<AnnotatedImage> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let mut toks = raw.split_whitespace();
        match toks.next() {
            None => continue,
            Some(t) if t.starts_with('#') => continue,
            Some("image") => {
                let img_path = toks
                    .next()
                    .ok_or_else(|| Error::parse(path, line, "expected image path"))?
                    .to_string();
                let width = parse_num(toks.next(), path, line, "image width")?;
                let height = parse_num(toks.next(), path, line, "image height")?;
                out.push(AnnotatedImage {
                    path: img_path,
                    width,
                    height,
                    faces: Vec::new(),
                });
            }
            Some("face") => {
                let b = parse_box(&mut toks, path, line)?;
                out.last_mut()
                    .ok_or_else(|| Error::parse(path, line, "face line before any image line"))?
                    .faces
                    .push(b);
            }
            Some(other) => return Err(Error::parse(path, line, format!("unknown record {other:?}"))),
        }
        if toks.next().is_some() {
            return Err(Error::parse(path, line, "trailing tokens"));
        }
    }
    Ok(out)
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotatedImage>> {
    parse_annotations(&read_text(path)?, path)
}

pub fn format_annotations(images: &[AnnotatedImage]) -> String {
    let mut s = String::new();
    for (i, img) in images.iter().enumerate() {
        if i > 0 {
            s.push('\n');
        }
        writeln!(s, "image {} {} {}", img.path, img.width, img.height).unwrap();
        for b in &img.faces {
            writeln!(s, "face {} {} {} {}", b.x_min, b.y_min, b.x_max, b.y_max).unwrap();
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionBlock {
    pub path: String,
    pub width: usize,
    pub height: usize,
    pub detections: Vec<Detection>,
}

pub fn format_detections(block: &DetectionBlock) -> String {
    let mut s = format!(
        "image {} w {} h {} count {}\n",
        block.path,
        block.width,
        block.height,
        block.detections.len()
    );
    for d in &block.detections {
        let b = &d.bbox;
        writeln!(s, "{:.6} {:.6} {:.6} {:.6} {:.6}", b.x_min, b.y_min, b.x_max, b.y_max, d.score).unwrap();
    }
    s
}

pub fn parse_detections(text: &str, path: &Path) -> Result<Vec<DetectionBlock>> {
    let mut out: Vec<DetectionBlock> = Vec::new();
    let mut expected = 0usize;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks[0] == "image" {
            if let Some(prev) = out.last() {
                if prev.detections.len() != expected {
                    return Err(Error::parse(path, line, format!("block {} declared {expected} detections", prev.path)));
                }
            }
            if toks.len() != 8 || toks[2] != "w" || toks[4] != "h" || toks[6] != "count" {
                return Err(Error::parse(path, line, "expected `image <path> w <w> h <h> count <n>`"));
            }
            expected = parse_num(Some(toks[7]), path, line, "count")?;
            out.push(DetectionBlock {
                path: toks[1].to_string(),
                width: parse_num(Some(toks[3]), path, line, "width")?,
                height: parse_num(Some(toks[5]), path, line, "height")?,
                detections: Vec::with_capacity(expected),
            });
            continue;
        }
        let block = out
            .last_mut()
            .ok_or_else(|| Error::parse(path, line, "detection before header"))?;
        if toks.len() != 5 {
            return Err(Error::parse(path, line, "expected `x_min y_min x_max y_max score`"));
        }
        let mut it = toks.iter().copied();
        let bbox = parse_box(&mut it, path, line)?;
        let score: f32 = parse_num(it.next(), path, line, "score")?;
        block.detections.push(Detection { bbox, score });
    }
    if let Some(prev) = out.last() {
        if prev.detections.len() != expected {
            return Err(Error::parse(path, text.lines().count(), format!("block {} declared {expected} detections", prev.path)));
        }
    }
    Ok(out)
}

pub fn read_detections(path: &Path) -> Result<Vec<DetectionBlock>> {
    parse_detections(&read_text(path)?, path)
}

/// `anchors w <w> h <h> count <n>` then `layer row col scale sub_idx cx cy side` per anchor.
pub fn format_anchors(set: &AnchorSet) -> String {
    let mut s = String::with_capacity(48 * (set.len() + 1));
    writeln!(s, "anchors w {} h {} count {}", set.width, set.height, set.len()).unwrap();
    for a in &set.anchors {
        writeln!(
            s,
            "{} {} {} {} {} {:.6} {:.6} {:.6}",
            set.layers[a.layer], a.row, a.col, a.scale, a.sub_index, a.cx, a.cy, a.side
        )
        .unwrap();
    }
    s
}

/// Header line then `index label gt tx ty tw th` per anchor (`gt` is -1 for negatives).
pub fn format_targets(path: &str, set: &AnchorSet, targets: &TrainingTargets) -> String {
    let mut s = format!(
        "image {} w {} h {} anchors {} positives {}\n",
        path,
        set.width,
        set.height,
        targets.len(),
        targets.positive_count()
    );
    for i in 0..targets.len() {
        let label = match targets.labels[i] {
            Label::Positive => "pos",
            Label::Negative => "neg",
        };
        let gt = targets.assigned[i].map_or(-1, |g| g as i64);
        let t = &targets.offsets[i];
        writeln!(s, "{i} {label} {gt} {:.6} {:.6} {:.6} {:.6}", t[0], t[1], t[2], t[3]).unwrap();
    }
    s
}

/// Tab-separated PR and ROC points followed by one summary line.
pub fn format_eval(result: &EvalResult) -> String {
    let mut s = String::from("# pr\trecall\tprecision\n");
    for (r, p) in &result.pr.points {
        writeln!(s, "pr\t{r:.6}\t{p:.6}").unwrap();
    }
    s.push_str("# roc\tfalse_positives\ttpr\n");
    for (fp, tpr) in &result.roc {
        writeln!(s, "roc\t{fp}\t{tpr:.6}").unwrap();
    }
    write!(
        s,
        "summary\tap={:.6}\ttp={}\tfp={}\tfaces={}",
        result.pr.average_precision, result.true_positives, result.false_positives, result.total_faces
    )
    .unwrap();
    for (b, t) in result.budgets.iter().zip(&result.tpr_at_fp) {
        write!(s, "\ttpr@{b}={t:.6}").unwrap();
    }
    s.push('\n');
    s
}
