//! Verification protocol and error-rate computation.
//!
//! Genuine trials compare every unordered pair of a user's images. Impostor
//! trials compare the first image of each user (enrolment) with the second
//! image of every other user. Scores are similarities: a trial is accepted
//! when its score is `>=` the threshold.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Eye;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct UserKey {
    pub subject_id: String,
    pub eye: Eye,
}

impl fmt::Display for UserKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.subject_id, self.eye)
    }
}

/// What the protocol needs to know about one image.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleInfo {
    pub image_id: String,
    pub user: UserKey,
    pub session: u32,
    pub distance_m: f64,
    /// Explicit position within the user's sequence; overrides the default
    /// (session, distance, image id) ordering when present.
    pub order: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Genuine,
    Impostor,
}

impl Label {
    pub fn is_genuine(self) -> bool {
        self == Label::Genuine
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Genuine => "genuine",
            Label::Impostor => "impostor",
        })
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "genuine" => Ok(Label::Genuine),
            "impostor" => Ok(Label::Impostor),
            other => Err(Error::Format(format!("unknown label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub enrol_id: String,
    pub probe_id: String,
    pub label: Label,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrialList {
    pub genuine: Vec<(String, String)>,
    pub impostor: Vec<(String, String)>,
}

impl TrialList {
    /// Genuine trials first, then impostor trials, each in generation order.
    pub fn trials(&self) -> Vec<Trial> {
        let mk = |label| {
            move |(e, p): &(String, String)| Trial {
                enrol_id: e.clone(),
                probe_id: p.clone(),
                label,
            }
        };
        self.genuine
            .iter()
            .map(mk(Label::Genuine))
            .chain(self.impostor.iter().map(mk(Label::Impostor)))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.genuine.len() + self.impostor.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub trials: TrialList,
    /// Users taking part, in protocol order, with their ordered image ids.
    pub users: Vec<(UserKey, Vec<String>)>,
    /// Users left out because they have fewer than two images.
    pub skipped_users: Vec<UserKey>,
}

impl Protocol {
    /// Index of the user owning each participating image.
    pub fn user_index(&self) -> BTreeMap<&str, usize> {
        self.users
            .iter()
            .enumerate()
            .flat_map(|(i, (_, ids))| ids.iter().map(move |id| (id.as_str(), i)))
            .collect()
    }
}

/// Groups samples per user, orders each user's images and generates the
/// genuine and impostor trial lists.
pub fn build_trials(samples: &[SampleInfo]) -> Protocol {
    let mut per_user: BTreeMap<&UserKey, Vec<&SampleInfo>> = BTreeMap::new();
    for s in samples {
        per_user.entry(&s.user).or_default().push(s);
    }
    let mut users = Vec::new();
    let mut skipped_users = Vec::new();
    for (user, mut imgs) in per_user {
        if imgs.len() < 2 {
            skipped_users.push(user.clone());
            continue;
        }
        imgs.sort_by(|a, b| {
            let ord = |s: &SampleInfo| s.order.unwrap_or(i64::MAX);
            ord(a)
                .cmp(&ord(b))
                .then(a.session.cmp(&b.session))
                .then(a.distance_m.total_cmp(&b.distance_m))
                .then(a.image_id.cmp(&b.image_id))
        });
        users.push((
            user.clone(),
            imgs.iter()
                .map(|s| s.image_id.clone())
                .collect::<Vec<String>>(),
        ));
    }

    let mut trials = TrialList::default();
    for (_, ids) in &users {
        for i in 0..ids.len() {
            for j in i + 1..ids.len() {
                trials.genuine.push((ids[i].clone(), ids[j].clone()));
            }
        }
    }
    for (u, (_, enrol)) in users.iter().enumerate() {
        for (v, (_, probe)) in users.iter().enumerate() {
            if u != v {
                trials.impostor.push((enrol[0].clone(), probe[1].clone()));
            }
        }
    }
    Protocol {
        trials,
        users,
        skipped_users,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreEntry {
    pub enrol_id: String,
    pub probe_id: String,
    pub label: Label,
    pub score: f64,
}

/// Scores of one comparator over a trial list.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub comparator_id: String,
    pub entries: Vec<ScoreEntry>,
}

#[derive(Serialize, Deserialize)]
struct ScoreRow {
    enrol_id: String,
    probe_id: String,
    label: Label,
    score: String,
    comparator: String,
}

impl ScoreSet {
    pub fn genuine_scores(&self) -> Vec<f64> {
        self.by_label(Label::Genuine)
    }

    pub fn impostor_scores(&self) -> Vec<f64> {
        self.by_label(Label::Impostor)
    }

    fn by_label(&self, label: Label) -> Vec<f64> {
        self.entries
            .iter()
            .filter(|e| e.label == label)
            .map(|e| e.score)
            .collect()
    }

    /// Writes `enrol_id,probe_id,label,score,comparator`. Scores use the
    /// shortest decimal form that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for e in &self.entries {
            wr.serialize(ScoreRow {
                enrol_id: e.enrol_id.clone(),
                probe_id: e.probe_id.clone(),
                label: e.label,
                score: format!("{}", e.score),
                comparator: self.comparator_id.clone(),
            })?;
        }
        if self.entries.is_empty() {
            wr.write_record(["enrol_id", "probe_id", "label", "score", "comparator"])?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<ScoreSet> {
        let mut rd = csv::Reader::from_reader(r);
        let mut comparator_id: Option<String> = None;
        let mut entries = Vec::new();
        for (i, row) in rd.deserialize::<ScoreRow>().enumerate() {
            let row = row?;
            match &comparator_id {
                None => comparator_id = Some(row.comparator.clone()),
                Some(c) if *c != row.comparator => {
                    return Err(Error::Format(format!(
                        "row {}: comparator {:?} differs from {c:?}",
                        i + 2,
                        row.comparator
                    )))
                }
                _ => {}
            }
            let score: f64 = row
                .score
                .parse()
                .map_err(|_| Error::Format(format!("row {}: bad score {:?}", i + 2, row.score)))?;
            if !score.is_finite() {
                return Err(Error::Format(format!("row {}: non-finite score", i + 2)));
            }
            entries.push(ScoreEntry {
                enrol_id: row.enrol_id,
                probe_id: row.probe_id,
                label: row.label,
                score,
            });
        }
        Ok(ScoreSet {
            comparator_id: comparator_id.unwrap_or_default(),
            entries,
        })
    }
}

/// Scores every trial with `compare(enrol_id, probe_id)`. Runs on the current
/// rayon pool; results are assembled in trial order, so the output does not
/// depend on the worker count.
pub fn score_trials<F>(trials: &[Trial], comparator_id: &str, compare: F) -> Result<ScoreSet>
where
    F: Fn(&str, &str) -> Result<f64> + Sync,
{
    let entries = trials
        .par_iter()
        .map(|t| {
            let score = compare(&t.enrol_id, &t.probe_id)?;
            if !score.is_finite() {
                return Err(Error::invalid(format!(
                    "non-finite score for {} vs {}",
                    t.enrol_id, t.probe_id
                )));
            }
            Ok(ScoreEntry {
                enrol_id: t.enrol_id.clone(),
                probe_id: t.probe_id.clone(),
                label: t.label,
                score,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreSet {
        comparator_id: comparator_id.to_owned(),
        entries,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// FAR targets reported with every curve.
pub const FAR_TARGETS: [f64; 3] = [0.001, 0.01, 0.1];

#[derive(Debug, Clone, PartialEq)]
pub struct DetCurve {
    /// Ascending thresholds, starting at -inf and ending at +inf.
    pub points: Vec<OperatingPoint>,
    pub eer: f64,
    pub frr_at_far: Vec<(f64, f64)>,
    pub genuine_count: usize,
    pub impostor_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetSummary {
    pub eer: f64,
    pub frr_at_far_1pct: f64,
    pub genuine: usize,
    pub impostor: usize,
}

impl DetCurve {
    /// Lowest FRR among operating points whose FAR does not exceed `far`.
    pub fn frr_at(&self, far: f64) -> f64 {
        self.points
            .iter()
            .filter(|p| p.far <= far)
            .map(|p| p.frr)
            .fold(1.0, f64::min)
    }

    pub fn summary(&self) -> DetSummary {
        DetSummary {
            eer: self.eer,
            frr_at_far_1pct: self.frr_at(0.01),
            genuine: self.genuine_count,
            impostor: self.impostor_count,
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["threshold", "far", "frr"])?;
        for p in &self.points {
            wr.write_record([
                format!("{}", p.threshold),
                format!("{}", p.far),
                format!("{}", p.frr),
            ])?;
        }
        wr.flush()?;
        Ok(())
    }
}

pub fn compute_det(scores: &ScoreSet) -> Result<DetCurve> {
    det_from_scores(&scores.genuine_scores(), &scores.impostor_scores())
}

pub fn det_from_scores(genuine: &[f64], impostor: &[f64]) -> Result<DetCurve> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::invalid(format!(
            "DET needs both classes ({} genuine, {} impostor)",
            genuine.len(),
            impostor.len()
        )));
    }
    if genuine.iter().chain(impostor).any(|s| !s.is_finite()) {
        return Err(Error::invalid("scores must be finite"));
    }
    let mut gen = genuine.to_vec();
    let mut imp = impostor.to_vec();
    gen.sort_by(f64::total_cmp);
    imp.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = gen.iter().chain(&imp).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let (ng, ni) = (gen.len() as f64, imp.len() as f64);
    let mut points = Vec::with_capacity(thresholds.len() + 2);
    points.push(OperatingPoint {
        threshold: f64::NEG_INFINITY,
        far: 1.0,
        frr: 0.0,
    });
    for &t in &thresholds {
        let rejected_gen = gen.partition_point(|&s| s < t);
        let rejected_imp = imp.partition_point(|&s| s < t);
        points.push(OperatingPoint {
            threshold: t,
            far: (imp.len() - rejected_imp) as f64 / ni,
            frr: rejected_gen as f64 / ng,
        });
    }
    points.push(OperatingPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        frr: 1.0,
    });

    let eer = interpolate_eer(&points);
    let mut curve = DetCurve {
        points,
        eer,
        frr_at_far: Vec::new(),
        genuine_count: gen.len(),
        impostor_count: imp.len(),
    };
    curve.frr_at_far = FAR_TARGETS.iter().map(|&f| (f, curve.frr_at(f))).collect();
    Ok(curve)
}

/// Linear interpolation at the first sign change of `FAR - FRR`.
fn interpolate_eer(points: &[OperatingPoint]) -> f64 {
    for w in points.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let da = a.far - a.frr;
        let db = b.far - b.frr;
        if da == 0.0 {
            return a.far;
        }
        if db == 0.0 {
            return b.far;
        }
        if da > 0.0 && db < 0.0 {
            let alpha = da / (da - db);
            return a.far + alpha * (b.far - a.far);
        }
    }
    unreachable!("FAR - FRR goes from +1 to -1 across the sentinels")
}
