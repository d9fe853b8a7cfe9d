//! File formats: DOTA annotation text, the points CSV, per-image proposal
//! JSON and evaluation reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{CategoryTable, LabeledBox, PointAnnotation};
use crate::error::{Error, Result};
use crate::eval::EvalReport;
use crate::geometry::{min_area_rect, obb_corners, Point2};
use crate::mask::{rle_decode, rle_encode, BinaryMask, RleMask};
use crate::scoring::ScoreBundle;
use crate::selection::{Proposal, ProposalSet};

/// Parses DOTA annotation text:
/// `x1 y1 x2 y2 x3 y3 x4 y4 category difficulty [confidence]`.
///
/// The optional trailing confidence is what pseudo-label files carry. The
/// `imagesource:` and `gsd:` header lines of the official files are skipped,
/// as are blank lines.
pub fn parse_dota_str(text: &str, image_id: &str, origin: &Path) -> Result<Vec<LabeledBox>> {
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with("imagesource:") || trimmed.starts_with("gsd:") {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: line_no,
            message,
        };
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() != 10 && fields.len() != 11 {
            return Err(err(format!("expected 10 or 11 fields, found {}", fields.len())));
        }
        let mut corners = Vec::with_capacity(4);
        for k in 0..4 {
            let coord = |i: usize| -> Result<f64> {
                fields[i]
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("field {} (`{}`) is not a finite number", i + 1, fields[i])))
            };
            corners.push(Point2::new(coord(2 * k)?, coord(2 * k + 1)?));
        }
        let category = fields[8].to_string();
        let difficulty: u32 = fields[9]
            .parse()
            .map_err(|_| err(format!("difficulty `{}` is not a non-negative integer", fields[9])))?;
        let confidence = match fields.get(10) {
            Some(s) => Some(
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(format!("confidence `{s}` is not a finite number")))?,
            ),
            None => None,
        };
        let obb = min_area_rect(&corners).map_err(|e| err(format!("degenerate quadrilateral: {e}")))?;
        out.push(LabeledBox {
            image_id: image_id.to_string(),
            obb,
            category,
            difficult: difficulty != 0,
            confidence,
        });
    }
    Ok(out)
}

/// Parses one DOTA annotation file; the image id is the file stem.
pub fn parse_dota_annotations(path: &Path) -> Result<Vec<LabeledBox>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dota_str(&text, &image_id_of(path)?, path)
}

fn image_id_of(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| Error::invalid(format!("cannot derive an image id from {}", path.display())))
}

/// Files in `dir` with extension `ext`, sorted by name.
fn files_with_extension(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Every `*.txt` annotation file in `dir`, in file-name order.
pub fn read_dota_dir(dir: &Path) -> Result<Vec<LabeledBox>> {
    let mut out = Vec::new();
    for path in files_with_extension(dir, "txt")? {
        out.extend(parse_dota_annotations(&path)?);
    }
    Ok(out)
}

/// DOTA lines from the box corners, three decimals. A confidence column is
/// appended when the box carries one.
pub fn format_dota_lines<'a>(boxes: impl IntoIterator<Item = &'a LabeledBox>) -> String {
    let mut out = String::new();
    for b in boxes {
        for c in obb_corners(&b.obb, 1.0) {
            let _ = write!(out, "{:.3} {:.3} ", c.x, c.y);
        }
        let _ = write!(out, "{} {}", b.category, u8::from(b.difficult));
        if let Some(conf) = b.confidence {
            let _ = write!(out, " {conf:.6}");
        }
        out.push('\n');
    }
    out
}

/// Groups boxes per image and renders one DOTA file body per image.
pub fn dota_files(boxes: &[LabeledBox]) -> BTreeMap<String, String> {
    let mut grouped: BTreeMap<String, Vec<&LabeledBox>> = BTreeMap::new();
    for b in boxes {
        grouped.entry(b.image_id.clone()).or_default().push(b);
    }
    grouped
        .into_iter()
        .map(|(id, bs)| (id, format_dota_lines(bs)))
        .collect()
}

/// Writes `<dir>/<image_id>.txt` for every image with at least one label.
pub fn write_pseudo_labels(dir: &Path, labels: &[LabeledBox]) -> Result<()> {
    write_text_files(dir, &dota_files(labels), "txt")
}

pub fn write_text_files(dir: &Path, files: &BTreeMap<String, String>, ext: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (id, body) in files {
        let path = dir.join(format!("{id}.{ext}"));
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[derive(Debug, Deserialize, Serialize)]
struct PointRow {
    image_id: String,
    x: f64,
    y: f64,
    category: String,
}

/// Parses the points CSV (`image_id,x,y,category` with a header row).
pub fn parse_points_str(text: &str, origin: &Path) -> Result<Vec<PointAnnotation>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["image_id", "x", "y", "category"] {
        return Err(Error::Parse {
            path: origin.to_path_buf(),
            line: 1,
            message: "header must be `image_id,x,y,category`".into(),
        });
    }
    let mut out = Vec::new();
    for record in reader.deserialize::<PointRow>() {
        let row = record.map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        if !(row.x.is_finite() && row.y.is_finite()) || row.image_id.is_empty() || row.category.is_empty() {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: out.len() + 2,
                message: "coordinates must be finite and ids non-empty".into(),
            });
        }
        out.push(PointAnnotation {
            image_id: row.image_id,
            x: row.x,
            y: row.y,
            category: row.category,
        });
    }
    Ok(out)
}

pub fn parse_points(path: &Path) -> Result<Vec<PointAnnotation>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_points_str(&text, path)
}

pub fn format_points(points: &[PointAnnotation]) -> String {
    let mut out = String::from("image_id,x,y,category\n");
    for p in points {
        let _ = writeln!(out, "{},{},{},{}", p.image_id, p.x, p.y, p.category);
    }
    out
}

/// RLE as it appears on the wire: `size` is `[height, width]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RleRecord {
    pub size: [usize; 2],
    pub counts: Vec<u64>,
}

impl RleRecord {
    pub fn from_mask(m: &BinaryMask) -> Self {
        let r = rle_encode(m);
        RleRecord {
            size: [r.height, r.width],
            counts: r.counts,
        }
    }

    pub fn decode(&self) -> Result<BinaryMask> {
        rle_decode(&RleMask {
            width: self.size[1],
            height: self.size[0],
            counts: self.counts.clone(),
        })
    }
}

/// One proposal; on the wire the score fields sit next to `rle`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "ProposalWire", into = "ProposalWire")]
pub struct ProposalRecord {
    /// Index of the annotated point among this image's points, in points-file
    /// order.
    pub point_index: usize,
    pub rle: RleRecord,
    pub scores: ScoreBundle,
}

// serde's flatten does not honour deny_unknown_fields, so the wire layout is
// spelled out here.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProposalWire {
    point_index: usize,
    rle: RleRecord,
    s_sam: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    per_point_instance_scores: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    per_point_cls_scores: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pos_bag_class_scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    neg_bag_class_scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    box_cls_scores: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    offset_pred: Option<f64>,
}

impl From<ProposalWire> for ProposalRecord {
    fn from(w: ProposalWire) -> Self {
        ProposalRecord {
            point_index: w.point_index,
            rle: w.rle,
            scores: ScoreBundle {
                s_sam: w.s_sam,
                per_point_instance_scores: w.per_point_instance_scores,
                per_point_cls_scores: w.per_point_cls_scores,
                pos_bag_class_scores: w.pos_bag_class_scores,
                neg_bag_class_scores: w.neg_bag_class_scores,
                box_cls_scores: w.box_cls_scores,
                offset_pred: w.offset_pred,
            },
        }
    }
}

impl From<ProposalRecord> for ProposalWire {
    fn from(r: ProposalRecord) -> Self {
        let s = r.scores;
        ProposalWire {
            point_index: r.point_index,
            rle: r.rle,
            s_sam: s.s_sam,
            per_point_instance_scores: s.per_point_instance_scores,
            per_point_cls_scores: s.per_point_cls_scores,
            pos_bag_class_scores: s.pos_bag_class_scores,
            neg_bag_class_scores: s.neg_bag_class_scores,
            box_cls_scores: s.box_cls_scores,
            offset_pred: s.offset_pred,
        }
    }
}

/// One proposal document per image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalFile {
    pub image_id: String,
    pub width: usize,
    pub height: usize,
    pub proposals: Vec<ProposalRecord>,
}

impl ProposalFile {
    /// Structural checks: mask sizes match the image, score fields are
    /// consistent with the category table.
    pub fn validate(&self, categories: &CategoryTable) -> Result<()> {
        for (i, p) in self.proposals.iter().enumerate() {
            let ctx = |field: &str| format!("{}: proposals[{i}].{field}", self.image_id);
            if p.rle.size != [self.height, self.width] {
                return Err(Error::format(
                    ctx("rle.size"),
                    format!("{:?} does not match image {}x{}", p.rle.size, self.height, self.width),
                ));
            }
            p.scores.validate(categories.len()).map_err(|e| match e {
                Error::Format { context, message } => Error::format(ctx(&context), message),
                other => other,
            })?;
        }
        Ok(())
    }
}

pub fn parse_proposals_str(text: &str, origin: &Path) -> Result<ProposalFile> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        path: origin.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

pub fn parse_proposals(path: &Path) -> Result<ProposalFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_proposals_str(&text, path)
}

pub fn format_proposals(file: &ProposalFile) -> String {
    // Serializing plain data structures cannot fail.
    serde_json::to_string(file).expect("proposal serialization") + "\n"
}

/// Every `*.json` proposal document in `dir`, keyed by image id.
pub fn read_proposal_dir(dir: &Path) -> Result<BTreeMap<String, ProposalFile>> {
    let mut out = BTreeMap::new();
    for path in files_with_extension(dir, "json")? {
        let file = parse_proposals(&path)?;
        if out.contains_key(&file.image_id) {
            return Err(Error::format(
                path.display().to_string(),
                format!("duplicate proposals for image `{}`", file.image_id),
            ));
        }
        out.insert(file.image_id.clone(), file);
    }
    Ok(out)
}

/// Joins points with their proposals. Images come out in id order, points
/// within an image in points-file order.
pub fn build_proposal_sets(
    points: &[PointAnnotation],
    proposals: &BTreeMap<String, ProposalFile>,
    categories: &CategoryTable,
) -> Result<Vec<ProposalSet>> {
    let mut by_image: BTreeMap<&str, Vec<&PointAnnotation>> = BTreeMap::new();
    for p in points {
        categories.index_of(&p.category)?;
        by_image.entry(&p.image_id).or_default().push(p);
    }
    if let Some(extra) = proposals.keys().find(|id| !by_image.contains_key(id.as_str())) {
        return Err(Error::invalid(format!("proposals for image `{extra}` have no annotated points")));
    }
    let mut sets = Vec::with_capacity(points.len());
    for (image, pts) in by_image {
        let file = proposals
            .get(image)
            .ok_or_else(|| Error::invalid(format!("no proposal file for image `{image}`")))?;
        file.validate(categories)?;
        let mut grouped: Vec<Vec<Proposal>> = vec![Vec::new(); pts.len()];
        for (i, rec) in file.proposals.iter().enumerate() {
            let slot = grouped.get_mut(rec.point_index).ok_or_else(|| {
                Error::format(
                    format!("{image}: proposals[{i}].point_index"),
                    format!("{} out of range for {} points", rec.point_index, pts.len()),
                )
            })?;
            let mask = rec
                .rle
                .decode()
                .map_err(|e| Error::format(format!("{image}: proposals[{i}].rle"), e.to_string()))?;
            slot.push(Proposal {
                mask,
                scores: rec.scores.clone(),
            });
        }
        for (annotation, proposals) in pts.into_iter().zip(grouped) {
            sets.push(ProposalSet::new(annotation.clone(), proposals)?);
        }
    }
    Ok(sets)
}

/// Ground truth aligned one-to-one with `sets`: the k-th point of an image
/// pairs with the k-th ground-truth box of that image.
pub fn align_ground_truth(sets: &[ProposalSet], gt: &[LabeledBox]) -> Result<Vec<LabeledBox>> {
    let mut by_image: BTreeMap<&str, Vec<&LabeledBox>> = BTreeMap::new();
    for g in gt {
        by_image.entry(&g.image_id).or_default().push(g);
    }
    let mut cursor: BTreeMap<&str, usize> = BTreeMap::new();
    let mut out = Vec::with_capacity(sets.len());
    for ps in sets {
        let image = ps.annotation().image_id.as_str();
        let k = cursor.entry(image).or_insert(0);
        let g = by_image.get(image).and_then(|v| v.get(*k)).ok_or_else(|| {
            Error::Pairing(format!("image `{image}` has fewer ground-truth boxes than points"))
        })?;
        *k += 1;
        out.push((*g).clone());
    }
    for (image, boxes) in &by_image {
        let used = cursor.get(image).copied().unwrap_or(0);
        if used != boxes.len() {
            return Err(Error::Pairing(format!(
                "image `{image}` has {} ground-truth boxes but {used} points",
                boxes.len()
            )));
        }
    }
    Ok(out)
}

pub fn report_json(report: &EvalReport) -> String {
    serde_json::to_string_pretty(report).expect("report serialization") + "\n"
}

/// Writes the report as JSON and, when `table` is given, as a text table.
pub fn write_report(report: &EvalReport, json: &Path, table: Option<&Path>) -> Result<()> {
    fs::write(json, report_json(report)).map_err(|e| Error::io(json, e))?;
    if let Some(t) = table {
        fs::write(t, report.to_table()).map_err(|e| Error::io(t, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rotated_iou, OrientedBox};

    #[test]
    fn dota_axis_aligned_quad() {
        let boxes = parse_dota_str("0 0 4 0 4 2 0 2 plane 0\n", "img", Path::new("img.txt")).unwrap();
        assert_eq!(boxes.len(), 1);
        let b = &boxes[0];
        assert_eq!(b.obb, OrientedBox::new(2.0, 1.0, 4.0, 2.0, 0.0).unwrap());
        assert_eq!(b.category, "plane");
        assert!(!b.difficult);
        assert!(b.confidence.is_none());
    }

    #[test]
    fn dota_empty_and_headers() {
        assert!(parse_dota_str("", "a", Path::new("a.txt")).unwrap().is_empty());
        let text = "imagesource:GoogleEarth\ngsd:0.146\n1 1 3 1 3 2 1 2 ship 1\n";
        let boxes = parse_dota_str(text, "a", Path::new("a.txt")).unwrap();
        assert!(boxes[0].difficult);
    }

    #[test]
    fn dota_errors_carry_line_numbers() {
        let text = "0 0 4 0 4 2 0 2 plane 0\n0 0 4 0 4 x 0 2 plane 0\n";
        match parse_dota_str(text, "a", Path::new("a.txt")) {
            Err(Error::Parse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("field 6"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_dota_str("0 0 4 0 4 2 0 2 plane\n", "a", Path::new("a.txt")).is_err());
        assert!(parse_dota_str("0 0 1 1 2 2 3 3 plane 0\n", "a", Path::new("a.txt")).is_err());
    }

    #[test]
    fn pseudo_label_line_round_trip() {
        let b = LabeledBox {
            image_id: "a".into(),
            obb: OrientedBox::new(40.123, 22.5, 17.3, 6.2, 0.7).unwrap(),
            category: "ship".into(),
            difficult: false,
            confidence: Some(0.8125),
        };
        let text = format_dota_lines([&b]);
        let back = parse_dota_str(&text, "a", Path::new("a.txt")).unwrap();
        assert!(rotated_iou(&back[0].obb, &b.obb).unwrap() >= 0.999);
        assert_eq!(back[0].confidence, Some(0.8125));
    }

    #[test]
    fn points_csv() {
        let text = "image_id,x,y,category\nP0001,10.5,20,plane\nP0001,3,4,ship\n";
        let pts = parse_points_str(text, Path::new("p.csv")).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[1].category, "ship");
        assert_eq!(parse_points_str(&format_points(&pts), Path::new("p.csv")).unwrap(), pts);
        assert!(parse_points_str("id,x,y,category\n", Path::new("p.csv")).is_err());
        let bad = parse_points_str("image_id,x,y,category\nP1,abc,2,plane\n", Path::new("p.csv"));
        assert!(matches!(bad, Err(Error::Parse { line: 2, .. })), "{bad:?}");
    }

    fn sample_file() -> ProposalFile {
        let m = BinaryMask::from_fn(6, 4, |c, r| c > 1 && r < 2).unwrap();
        ProposalFile {
            image_id: "img".into(),
            width: 6,
            height: 4,
            proposals: vec![ProposalRecord {
                point_index: 0,
                rle: RleRecord::from_mask(&m),
                scores: ScoreBundle {
                    s_sam: 0.93,
                    box_cls_scores: Some(vec![0.1; 15]),
                    offset_pred: Some(0.2),
                    ..Default::default()
                },
            }],
        }
    }

    #[test]
    fn proposals_round_trip() {
        let f = sample_file();
        let text = format_proposals(&f);
        assert_eq!(parse_proposals_str(&text, Path::new("img.json")).unwrap(), f);
        assert!(!text.contains("neg_bag_class_scores"));
    }

    #[test]
    fn proposal_schema_violations_name_the_field() {
        let unknown = r#"{"image_id":"a","width":2,"height":2,"proposals":[{"point_index":0,"rle":{"size":[2,2],"counts":[4]},"s_sam":0.5,"bogus":1}]}"#;
        let e = parse_proposals_str(unknown, Path::new("a.json")).unwrap_err().to_string();
        assert!(e.contains("bogus"), "{e}");
        let missing = r#"{"image_id":"a","width":2,"height":2,"proposals":[{"point_index":0,"rle":{"size":[2,2],"counts":[4]}}]}"#;
        let e = parse_proposals_str(missing, Path::new("a.json")).unwrap_err().to_string();
        assert!(e.contains("s_sam"), "{e}");

        let mut f = sample_file();
        f.proposals[0].scores.box_cls_scores = Some(vec![0.0; 3]);
        let e = f.validate(&CategoryTable::dota()).unwrap_err().to_string();
        assert!(e.contains("proposals[0].box_cls_scores"), "{e}");
        let mut f = sample_file();
        f.proposals[0].rle.size = [3, 6];
        assert!(f.validate(&CategoryTable::dota()).unwrap_err().to_string().contains("rle.size"));
    }

    #[test]
    fn sets_join_points_and_proposals() {
        let points = vec![PointAnnotation {
            image_id: "img".into(),
            x: 3.0,
            y: 1.0,
            category: "ship".into(),
        }];
        let files: BTreeMap<_, _> = [("img".to_string(), sample_file())].into();
        let sets = build_proposal_sets(&points, &files, &CategoryTable::dota()).unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].len(), 1);

        let mut bad = sample_file();
        bad.proposals[0].point_index = 3;
        let files: BTreeMap<_, _> = [("img".to_string(), bad)].into();
        assert!(build_proposal_sets(&points, &files, &CategoryTable::dota()).is_err());
        assert!(build_proposal_sets(&points, &BTreeMap::new(), &CategoryTable::dota()).is_err());
    }
}
