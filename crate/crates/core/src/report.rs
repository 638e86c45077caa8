// SPDX-License-Identifier: MIT OR Apache-2.0

//! Run manifests, artifact writers, SVG figures and the model/human
//! comparison.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ablation::TopkRow;
use crate::error::{Error, Result};
use crate::evaluation::{ConditionSummary, Congruence, CHANCE};
use crate::probing::{EmbeddingProjection, Signal, TraceSummary};
use crate::stimuli::{Gender, Number, TargetRole, Task};

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// Everything that determines a run's outputs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Digest of the canonical effective configuration.
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    /// Checkpoint file digests.
    pub checkpoints: BTreeMap<String, String>,
    /// Input file digests (stimuli, responses, tables).
    pub inputs: BTreeMap<String, String>,
    pub tool_version: String,
}

impl RunManifest {
    pub fn new(command: &str, config: &serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            config_hash: sha256_hex(config.to_string().as_bytes()),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            ..Self::default()
        }
    }

    pub fn seed(mut self, name: &str, seed: u64) -> Self {
        self.seeds.insert(name.to_string(), seed);
        self
    }

    pub fn checkpoint(mut self, path: &Path) -> Result<Self> {
        self.checkpoints.insert(file_name(path), file_digest(path)?);
        Ok(self)
    }

    pub fn input(mut self, path: &Path) -> Result<Self> {
        self.inputs.insert(file_name(path), file_digest(path)?);
        Ok(self)
    }

    /// Full hex digest of the manifest.
    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("manifest serializes").as_bytes())
    }

    /// Directory name under the run root.
    pub fn run_id(&self) -> String {
        format!("{}-{}", self.command, &self.hash()[..16])
    }

    pub fn header_line(&self) -> String {
        format!("# manifest={}", self.hash())
    }
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// Output directory for one run: creates it and writes `manifest.json`.
pub fn prepare_run_dir(root: &Path, manifest: &RunManifest) -> Result<PathBuf> {
    let dir = root.join(manifest.run_id());
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut json = serde_json::to_string_pretty(manifest)?;
    json.push('\n');
    write_file(&dir.join("manifest.json"), &json)?;
    Ok(dir)
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Writes CSV text preceded by the manifest comment line.
pub fn write_csv(path: &Path, manifest: &RunManifest, body: &str) -> Result<()> {
    write_file(path, &format!("{}\n{body}", manifest.header_line()))
}

/// Reads a CSV written by [`write_csv`], dropping comment lines.
pub fn read_csv(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect())
}

pub fn summaries_csv(rows: &[ConditionSummary]) -> String {
    let mut s = String::from(ConditionSummary::CSV_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

// ---------------------------------------------------------------- SVG

pub const BLUE: &str = "#1f5fbf";
pub const RED: &str = "#c8102e";
const CYAN: &str = "#17becf";
const MAGENTA: &str = "#b5179e";

/// Minimal SVG builder; output has no timestamps so it is reproducible.
pub struct Svg {
    width: f64,
    height: f64,
    body: String,
}

impl Svg {
    pub fn new(width: f64, height: f64) -> Self {
        Self {
            width,
            height,
            body: String::new(),
        }
    }

    pub fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str, width: f64, dashed: bool) {
        let dash = if dashed { " stroke-dasharray=\"5,3\"" } else { "" };
        let _ = writeln!(
            self.body,
            "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" stroke=\"{stroke}\" stroke-width=\"{width}\"{dash}/>"
        );
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], stroke: &str, width: f64, dashed: bool) {
        let dash = if dashed { " stroke-dasharray=\"5,3\"" } else { "" };
        let p: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            self.body,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"{width}\"{dash}/>",
            p.join(" ")
        );
    }

    pub fn polygon(&mut self, pts: &[(f64, f64)], fill: &str, opacity: f64) {
        let p: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(self.body, "<polygon points=\"{}\" fill=\"{fill}\" fill-opacity=\"{opacity}\" stroke=\"none\"/>", p.join(" "));
    }

    pub fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str) {
        let _ = writeln!(self.body, "<rect x=\"{x:.2}\" y=\"{y:.2}\" width=\"{w:.2}\" height=\"{h:.2}\" fill=\"{fill}\"/>");
    }

    pub fn text(&mut self, x: f64, y: f64, s: &str, size: f64, anchor: &str, style: &str) {
        let _ = writeln!(
            self.body,
            "<text x=\"{x:.2}\" y=\"{y:.2}\" font-size=\"{size}\" text-anchor=\"{anchor}\" font-family=\"sans-serif\"{style}>{}</text>",
            escape(s)
        );
    }

    pub fn finish(self) -> String {
        format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Plot area mapping data coordinates to pixels.
struct Panel {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    xr: (f64, f64),
    yr: (f64, f64),
}

impl Panel {
    fn px(&self, x: f64) -> f64 {
        let span = (self.xr.1 - self.xr.0).max(1e-12);
        self.x0 + (x - self.xr.0) / span * self.w
    }

    fn py(&self, y: f64) -> f64 {
        let span = (self.yr.1 - self.yr.0).max(1e-12);
        self.y0 + self.h - (y - self.yr.0) / span * self.h
    }

    fn axes(&self, svg: &mut Svg, title: &str, yticks: &[f64]) {
        svg.line(self.x0, self.y0 + self.h, self.x0 + self.w, self.y0 + self.h, "black", 1.0, false);
        svg.line(self.x0, self.y0, self.x0, self.y0 + self.h, "black", 1.0, false);
        for &t in yticks {
            let y = self.py(t);
            svg.line(self.x0 - 4.0, y, self.x0, y, "black", 1.0, false);
            svg.text(self.x0 - 6.0, y + 4.0, &format!("{t}"), 10.0, "end", "");
        }
        svg.text(self.x0 + self.w / 2.0, self.y0 - 8.0, title, 12.0, "middle", "");
    }
}

/// Top-k curves, one panel per condition: each model in gray, the mean in
/// black with a standard-error band.
pub fn topk_svg(curves: &[(String, Vec<TopkRow>)], conditions: &[String]) -> String {
    let k_max = curves.iter().flat_map(|c| c.1.iter().map(|r| r.k)).max().unwrap_or(0);
    let pw = 260.0;
    let mut svg = Svg::new(60.0 + conditions.len() as f64 * (pw + 50.0), 300.0);
    for (ci, cond) in conditions.iter().enumerate() {
        let p = Panel {
            x0: 60.0 + ci as f64 * (pw + 50.0),
            y0: 40.0,
            w: pw,
            h: 200.0,
            xr: (0.0, k_max.max(1) as f64),
            yr: (0.0, 1.0),
        };
        p.axes(&mut svg, cond, &[0.0, 0.5, 1.0]);
        svg.line(p.px(0.0), p.py(CHANCE), p.px(k_max as f64), p.py(CHANCE), "#999999", 1.0, true);
        let mut by_k: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for (_, rows) in curves {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| &r.condition == cond)
                .map(|r| {
                    by_k.entry(r.k).or_default().push(r.accuracy);
                    (p.px(r.k as f64), p.py(r.accuracy))
                })
                .collect();
            svg.polyline(&pts, "#b0b0b0", 1.0, false);
        }
        let stats: Vec<(f64, f64, f64)> = by_k
            .iter()
            .map(|(&k, v)| {
                let m = v.iter().sum::<f64>() / v.len() as f64;
                let sem = if v.len() > 1 {
                    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt() / (v.len() as f64).sqrt()
                } else {
                    0.0
                };
                (k as f64, m, sem)
            })
            .collect();
        let mut band: Vec<(f64, f64)> = stats.iter().map(|&(k, m, s)| (p.px(k), p.py(m + s))).collect();
        band.extend(stats.iter().rev().map(|&(k, m, s)| (p.px(k), p.py(m - s))));
        svg.polygon(&band, "black", 0.15);
        let mean: Vec<(f64, f64)> = stats.iter().map(|&(k, m, _)| (p.px(k), p.py(m))).collect();
        svg.polyline(&mean, "black", 2.0, false);
        svg.text(p.x0 + p.w / 2.0, p.y0 + p.h + 28.0, "k (units ablated)", 10.0, "middle", "");
    }
    svg.finish()
}

/// Condition-averaged traces of one unit, one panel per signal. Red for a
/// singular subject, blue for plural; dashed when the nouns disagree.
pub fn trace_svg(traces: &[TraceSummary], title: &str) -> String {
    let signals: Vec<Signal> = Signal::ALL
        .into_iter()
        .filter(|s| traces.iter().any(|t| t.signal == *s))
        .collect();
    let len = traces.iter().map(|t| t.mean.len()).max().unwrap_or(1);
    let pw = 40.0 * len as f64;
    let mut svg = Svg::new(60.0 + signals.len() as f64 * (pw + 50.0), 330.0);
    svg.text(20.0, 18.0, title, 13.0, "start", "");
    for (si, sig) in signals.iter().enumerate() {
        let rows: Vec<&TraceSummary> = traces.iter().filter(|t| t.signal == *sig).collect();
        let (lo, hi) = rows
            .iter()
            .flat_map(|t| t.mean.iter())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let (lo, hi) = if lo < hi { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
        let p = Panel {
            x0: 60.0 + si as f64 * (pw + 50.0),
            y0: 50.0,
            w: pw,
            h: 200.0,
            xr: (0.0, (len.max(2) - 1) as f64),
            yr: (lo, hi),
        };
        p.axes(&mut svg, sig.code(), &[lo, hi].map(|v| (v * 100.0).round() / 100.0));
        for t in &rows {
            let colour = match t.condition.number(0) {
                Some(Number::Plural) => BLUE,
                _ => RED,
            };
            let pts: Vec<(f64, f64)> = t.mean.iter().enumerate().map(|(i, &m)| (p.px(i as f64), p.py(m))).collect();
            svg.polyline(&pts, colour, 1.5, !t.condition.subjects_congruent());
        }
        if let Some(t) = rows.first() {
            for (i, tok) in t.tokens.iter().enumerate() {
                let x = p.px(i as f64);
                let _ = writeln!(
                    svg.body,
                    "<text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"9\" font-family=\"sans-serif\" transform=\"rotate(45 {x:.2} {:.2})\">{}</text>",
                    p.y0 + p.h + 12.0,
                    p.y0 + p.h + 12.0,
                    escape(tok)
                );
            }
        }
    }
    svg.finish()
}

/// Embedding projection scatter: red singular, blue plural; feminine words
/// bold, masculine italic.
pub fn pca_svg(proj: &EmbeddingProjection) -> String {
    let xs: Vec<f64> = proj.points.iter().map(|p| p.x).collect();
    let ys: Vec<f64> = proj.points.iter().map(|p| p.y).collect();
    let range = |v: &[f64]| {
        let (a, b) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let pad = ((b - a) * 0.1).max(1e-6);
        (a - pad, b + pad)
    };
    let p = Panel {
        x0: 60.0,
        y0: 40.0,
        w: 480.0,
        h: 400.0,
        xr: range(&xs),
        yr: range(&ys),
    };
    let mut svg = Svg::new(580.0, 490.0);
    p.axes(&mut svg, &format!("{:?} embeddings, PC{} vs PC{}", proj.side, proj.pcs.0, proj.pcs.1), &[]);
    for pt in &proj.points {
        let colour = match pt.number {
            Some(Number::Singular) => RED,
            Some(Number::Plural) => BLUE,
            None => "black",
        };
        let style = match pt.gender {
            Some(Gender::Feminine) => " font-weight=\"bold\"",
            Some(Gender::Masculine) => " font-style=\"italic\"",
            None => "",
        };
        svg.text(p.px(pt.x), p.py(pt.y), &pt.word, 10.0, "middle", &format!(" fill=\"{colour}\"{style}"));
    }
    svg.finish()
}

// ------------------------------------------------------ model vs human

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub key: String,
    pub task: Task,
    pub role: Option<TargetRole>,
    pub congruence: Option<Congruence>,
    pub condition: Option<String>,
    pub model_error: Option<f64>,
    pub model_ci: Option<(f64, f64)>,
    pub human_error: Option<f64>,
    pub human_ci: Option<(f64, f64)>,
    /// Both sides defined and the intervals do not overlap.
    pub differs: Option<bool>,
}

/// One checklist item evaluated on each side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChecklistItem {
    pub name: String,
    pub model: Option<bool>,
    pub human: Option<bool>,
    /// Sides disagree; `None` when either side is missing.
    pub differs: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub human_absent: bool,
    pub rows: Vec<ComparisonRow>,
    pub checklist: Vec<ChecklistItem>,
}

/// Error rates at or below this count as "low".
pub const LOW_ERROR: f64 = 0.1;

fn ci(s: &ConditionSummary) -> Option<(f64, f64)> {
    Some((s.ci_low?, s.ci_high?))
}

/// Aligns model and human summaries (same grouping on both sides) and
/// evaluates the similarity/difference checklist.
pub fn compare_model_human(model: &[ConditionSummary], human: Option<&[ConditionSummary]>) -> Result<ComparisonReport> {
    let index = |rows: &[ConditionSummary]| -> Result<BTreeMap<String, ConditionSummary>> {
        let mut m = BTreeMap::new();
        for r in rows {
            if m.insert(r.key(), r.clone()).is_some() {
                return Err(Error::Alignment(format!("duplicate group {}", r.key())));
            }
        }
        Ok(m)
    };
    let m = index(model)?;
    let h = human.map(index).transpose()?;
    if let Some(h) = &h {
        let (mk, hk): (BTreeSet<&String>, BTreeSet<&String>) = (m.keys().collect(), h.keys().collect());
        if mk != hk {
            let only_m: Vec<&&String> = mk.difference(&hk).collect();
            let only_h: Vec<&&String> = hk.difference(&mk).collect();
            return Err(Error::Alignment(format!(
                "groupings differ: model-only {only_m:?}, human-only {only_h:?}"
            )));
        }
    }
    let rows = m
        .values()
        .map(|ms| {
            let hs = h.as_ref().map(|h| &h[&ms.key()]);
            let (mci, hci) = (ci(ms), hs.and_then(ci));
            ComparisonRow {
                key: ms.key(),
                task: ms.task,
                role: ms.role,
                congruence: ms.congruence,
                condition: ms.condition.clone(),
                model_error: ms.error_rate,
                model_ci: mci,
                human_error: hs.and_then(|s| s.error_rate),
                human_ci: hci,
                differs: match (mci, hci) {
                    (Some(a), Some(b)) => Some(a.1 < b.0 || b.1 < a.0),
                    _ => None,
                },
            }
        })
        .collect();
    let checklist = checklist(&m, h.as_ref());
    Ok(ComparisonReport {
        human_absent: h.is_none(),
        rows,
        checklist,
    })
}

type Side = BTreeMap<String, ConditionSummary>;

/// Error rate of a congruence-level cell (`condition` not grouped).
fn cell(side: &Side, task: Task, role: TargetRole, c: Congruence) -> Option<f64> {
    side.values()
        .find(|s| s.task == task && s.role == Some(role) && s.congruence == Some(c) && s.condition.is_none())
        .and_then(|s| s.error_rate)
}

fn effect(side: &Side, task: Task, role: TargetRole) -> Option<f64> {
    Some(cell(side, task, role, Congruence::Incongruent)? - cell(side, task, role, Congruence::Congruent)?)
}

fn checklist(model: &Side, human: Option<&Side>) -> Vec<ChecklistItem> {
    use Congruence::*;
    use TargetRole::*;
    let items: Vec<(&str, Box<dyn Fn(&Side) -> Option<bool>>)> = vec![
        (
            "low error on the embedded verb of successive constructions",
            Box::new(|s| {
                let mut all = true;
                for t in [Task::ShortSuccessive, Task::LongSuccessive] {
                    for c in [Congruent, Incongruent] {
                        all &= cell(s, t, Embedded, c)? <= LOW_ERROR;
                    }
                }
                Some(all)
            }),
        ),
        (
            "more errors with incongruent subjects on every nested verb",
            Box::new(|s| {
                let mut all = true;
                for t in [Task::ShortNested, Task::LongNested] {
                    for r in [Main, Embedded] {
                        all &= effect(s, t, r)? > 0.0;
                    }
                }
                Some(all)
            }),
        ),
        (
            "congruence effect larger on the embedded than the main verb",
            Box::new(|s| {
                let mut all = true;
                for t in [Task::ShortNested, Task::LongNested] {
                    all &= effect(s, t, Embedded)? > effect(s, t, Main)?;
                }
                Some(all)
            }),
        ),
        (
            "congruence effect on the embedded verb larger in long nesting",
            Box::new(|s| Some(effect(s, Task::LongNested, Embedded)? > effect(s, Task::ShortNested, Embedded)?)),
        ),
        (
            "below chance on long-nested embedded verb, incongruent subjects",
            Box::new(|s| Some(cell(s, Task::LongNested, Embedded, Incongruent)? > CHANCE)),
        ),
        (
            "above chance on long-nested embedded verb, incongruent subjects",
            Box::new(|s| Some(cell(s, Task::LongNested, Embedded, Incongruent)? < CHANCE)),
        ),
    ];
    items
        .into_iter()
        .map(|(name, f)| {
            let mv = f(model);
            let hv = human.and_then(&f);
            ChecklistItem {
                name: name.to_string(),
                model: mv,
                human: hv,
                differs: match (mv, hv) {
                    (Some(a), Some(b)) => Some(a != b),
                    _ => None,
                },
            }
        })
        .collect()
}

impl ComparisonReport {
    pub const CSV_HEADER: &'static str = "key,model_error,model_ci_low,model_ci_high,human_error,human_ci_low,human_ci_high,differs";

    pub fn csv(&self) -> String {
        let o = |v: Option<f64>| v.map_or("NA".to_string(), |x| x.to_string());
        let mut s = String::from(Self::CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.key,
                o(r.model_error),
                o(r.model_ci.map(|c| c.0)),
                o(r.model_ci.map(|c| c.1)),
                o(r.human_error),
                o(r.human_ci.map(|c| c.0)),
                o(r.human_ci.map(|c| c.1)),
                r.differs.map_or("NA".to_string(), |d| d.to_string())
            );
        }
        s
    }

    pub fn to_text(&self) -> String {
        let yn = |v: Option<bool>| match v {
            Some(true) => "yes",
            Some(false) => "no",
            None => "absent",
        };
        let mut s = String::new();
        if self.human_absent {
            s.push_str("human data: absent\n");
        }
        for c in &self.checklist {
            let _ = writeln!(s, "{}: model {}, humans {}", c.name, yn(c.model), yn(c.human));
        }
        s
    }

    /// Grouped bars per nesting task: verbs on the x axis, congruent blue and
    /// incongruent red, 95% interval whiskers; model row above human row.
    /// Rows grouped by condition use blue/cyan and red/magenta by the
    /// embedded subject's number.
    pub fn svg(&self) -> String {
        let tasks: Vec<Task> = Task::NESTING
            .into_iter()
            .filter(|t| self.rows.iter().any(|r| r.task == *t))
            .collect();
        let pw = 220.0;
        let mut svg = Svg::new(60.0 + tasks.len().max(1) as f64 * (pw + 40.0), 560.0);
        for (side, label) in [(0usize, "model"), (1, "humans")] {
            for (ti, t) in tasks.iter().enumerate() {
                let p = Panel {
                    x0: 60.0 + ti as f64 * (pw + 40.0),
                    y0: 40.0 + side as f64 * 260.0,
                    w: pw,
                    h: 190.0,
                    xr: (0.0, 1.0),
                    yr: (0.0, 1.0),
                };
                p.axes(&mut svg, &format!("{} ({label})", t.display_name()), &[0.0, 0.5, 1.0]);
                if side == 1 && self.human_absent {
                    svg.text(p.x0 + p.w / 2.0, p.y0 + p.h / 2.0, "absent", 14.0, "middle", " fill=\"#888888\"");
                    continue;
                }
                let rows: Vec<&ComparisonRow> = self.rows.iter().filter(|r| r.task == *t).collect();
                let n = rows.len().max(1) as f64;
                let bw = p.w / (n + 1.0);
                for (i, r) in rows.iter().enumerate() {
                    let (v, c) = if side == 0 { (r.model_error, r.model_ci) } else { (r.human_error, r.human_ci) };
                    let Some(v) = v else { continue };
                    let colour = bar_colour(r);
                    let x = p.x0 + (i as f64 + 0.5) * bw + 2.0;
                    svg.rect(x, p.py(v), bw - 4.0, p.py(0.0) - p.py(v), colour);
                    if let Some((lo, hi)) = c {
                        let cx = x + (bw - 4.0) / 2.0;
                        svg.line(cx, p.py(lo), cx, p.py(hi), "black", 1.0, false);
                    }
                    let lab = r.condition.clone().unwrap_or_else(|| r.role.map_or("*".into(), |x| x.code().to_string()));
                    svg.text(x + (bw - 4.0) / 2.0, p.y0 + p.h + 14.0, &lab, 9.0, "middle", "");
                }
            }
        }
        svg.finish()
    }
}

fn bar_colour(r: &ComparisonRow) -> &'static str {
    let incongruent = r.congruence == Some(Congruence::Incongruent)
        || r
            .condition
            .as_deref()
            .is_some_and(|c| c.len() >= 2 && c.as_bytes()[0] != c.as_bytes()[1]);
    let plural_second = r.condition.as_deref().is_some_and(|c| c.as_bytes().get(1) == Some(&b'P'));
    match (incongruent, r.condition.is_some() && plural_second) {
        (false, false) => BLUE,
        (false, true) => CYAN,
        (true, false) => RED,
        (true, true) => MAGENTA,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summary(task: Task, role: TargetRole, c: Congruence, e: f64) -> ConditionSummary {
        ConditionSummary {
            task,
            condition: None,
            congruence: Some(c),
            role: Some(role),
            attractor: None,
            n: 10,
            accuracy: Some(1.0 - e),
            error_rate: Some(e),
            success_probability: None,
            ci_low: Some((e - 0.05).max(0.0)),
            ci_high: Some((e + 0.05).min(1.0)),
            defined: true,
        }
    }

    fn model_side() -> Vec<ConditionSummary> {
        let mut v = Vec::new();
        for t in Task::NESTING {
            for r in [TargetRole::Main, TargetRole::Embedded] {
                v.push(summary(t, r, Congruence::Congruent, 0.02));
                let e = if t == Task::LongNested && r == TargetRole::Embedded { 0.6 } else { 0.2 };
                v.push(summary(t, r, Congruence::Incongruent, e));
            }
        }
        v
    }

    #[test]
    fn equal_sides_do_not_differ() {
        let m = model_side();
        let rep = compare_model_human(&m, Some(&m)).unwrap();
        assert!(rep.rows.iter().all(|r| r.differs == Some(false)));
        assert!(rep.checklist.iter().all(|c| c.differs == Some(false)));
        let below = rep.checklist.iter().find(|c| c.name.starts_with("below")).unwrap();
        assert_eq!(below.model, Some(true));
    }

    #[test]
    fn human_absent() {
        let rep = compare_model_human(&model_side(), None).unwrap();
        assert!(rep.human_absent);
        assert!(rep.checklist.iter().all(|c| c.human.is_none()));
        assert!(rep.svg().contains("absent"));
    }

    #[test]
    fn misaligned_groups() {
        let m = model_side();
        assert!(matches!(compare_model_human(&m, Some(&m[1..])), Err(Error::Alignment(_))));
    }

    #[test]
    fn manifest_hash_stable() {
        let a = RunManifest::new("eval", &serde_json::json!({"x": 1})).seed("seed", 3);
        let b = RunManifest::new("eval", &serde_json::json!({"x": 1})).seed("seed", 3);
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), a.clone().seed("seed", 4).hash());
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
