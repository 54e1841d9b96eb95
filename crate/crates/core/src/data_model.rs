//! Domain types for role-coded collaboration tasks.
//!
//! A task is observed as one role code per student per minute (up to 24
//! minutes, up to 5 students). Three coders annotate every task; the group's
//! quality label is resolved across them by majority vote, falling back to
//! the median under the ordered label scale. Two feature encodings are
//! derived per sample: the padded 24x5 temporal matrix and a normalized
//! 7-bin role histogram.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Temporal length every task is padded to.
pub const MAX_MINUTES: usize = 24;
/// Student columns every matrix is padded to.
pub const MAX_STUDENTS: usize = 5;
/// Number of distinct non-empty role codes.
pub const NUM_ROLES: usize = 7;
/// Number of ordered collaboration-quality classes.
pub const NUM_CLASSES: usize = 5;

/// Per-student, per-minute role code. `Empty` marks unassigned segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum RoleCode {
    Empty = 0,
    /// Group guide / coordinator.
    GroupGuide = 1,
    /// Active contributor.
    Contributor = 2,
    Follower = 3,
    ConflictResolver = 4,
    ConflictInstigator = 5,
    OffTask = 6,
    LoneSolver = 7,
}

impl RoleCode {
    pub const NON_EMPTY: [RoleCode; NUM_ROLES] = [
        RoleCode::GroupGuide,
        RoleCode::Contributor,
        RoleCode::Follower,
        RoleCode::ConflictResolver,
        RoleCode::ConflictInstigator,
        RoleCode::OffTask,
        RoleCode::LoneSolver,
    ];

    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn from_value(v: u8) -> Option<RoleCode> {
        match v {
            0 => Some(RoleCode::Empty),
            1 => Some(RoleCode::GroupGuide),
            2 => Some(RoleCode::Contributor),
            3 => Some(RoleCode::Follower),
            4 => Some(RoleCode::ConflictResolver),
            5 => Some(RoleCode::ConflictInstigator),
            6 => Some(RoleCode::OffTask),
            7 => Some(RoleCode::LoneSolver),
            _ => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            RoleCode::Empty => "",
            RoleCode::GroupGuide => "GG",
            RoleCode::Contributor => "C",
            RoleCode::Follower => "F",
            RoleCode::ConflictResolver => "CR",
            RoleCode::ConflictInstigator => "CI",
            RoleCode::OffTask => "OT",
            RoleCode::LoneSolver => "LS",
        }
    }

    /// Parses a non-empty role token as written in roles files.
    pub fn from_token(tok: &str) -> Option<RoleCode> {
        match tok {
            "GG" => Some(RoleCode::GroupGuide),
            "C" => Some(RoleCode::Contributor),
            "F" => Some(RoleCode::Follower),
            "CR" => Some(RoleCode::ConflictResolver),
            "CI" => Some(RoleCode::ConflictInstigator),
            "OT" => Some(RoleCode::OffTask),
            "LS" => Some(RoleCode::LoneSolver),
            _ => None,
        }
    }
}

/// Ordered collaboration-quality label. The declaration order is the label
/// scale: `Effective < Satisfactory < Progressing < NeedsImprovement <
/// WorkingIndependently`, so ordinal distance is `|index a - index b|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum CollabLabel {
    Effective = 0,
    Satisfactory = 1,
    Progressing = 2,
    NeedsImprovement = 3,
    WorkingIndependently = 4,
}

impl CollabLabel {
    pub const ALL: [CollabLabel; NUM_CLASSES] = [
        CollabLabel::Effective,
        CollabLabel::Satisfactory,
        CollabLabel::Progressing,
        CollabLabel::NeedsImprovement,
        CollabLabel::WorkingIndependently,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<CollabLabel> {
        CollabLabel::ALL.get(i).copied()
    }

    pub fn token(self) -> &'static str {
        match self {
            CollabLabel::Effective => "E",
            CollabLabel::Satisfactory => "S",
            CollabLabel::Progressing => "P",
            CollabLabel::NeedsImprovement => "NI",
            CollabLabel::WorkingIndependently => "WI",
        }
    }

    pub fn from_token(tok: &str) -> Option<CollabLabel> {
        match tok {
            "E" => Some(CollabLabel::Effective),
            "S" => Some(CollabLabel::Satisfactory),
            "P" => Some(CollabLabel::Progressing),
            "NI" => Some(CollabLabel::NeedsImprovement),
            "WI" => Some(CollabLabel::WorkingIndependently),
            _ => None,
        }
    }

    /// Ordinal distance under the label scale.
    pub fn distance(self, other: CollabLabel) -> usize {
        (self.index() as isize - other.index() as isize).unsigned_abs()
    }
}

impl fmt::Display for CollabLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// One row of a roles file: a single coded student-minute segment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub group_id: String,
    pub task_id: String,
    pub coder_id: String,
    pub student_index: usize,
    pub minute_index: usize,
    pub role: RoleCode,
}

/// Padded 24x5 temporal matrix of role code values (minute-major rows).
///
/// Cells at `minute >= duration_minutes` or `student >= num_students` are
/// zero; every active minute has at least one coded cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct B2Matrix {
    cells: [[u8; MAX_STUDENTS]; MAX_MINUTES],
    duration_minutes: usize,
    num_students: usize,
}

impl B2Matrix {
    /// Builds a matrix from the coded cells of one (group, task, coder).
    ///
    /// Duration is inferred as `1 + max coded minute`; the student count as
    /// `1 + max student index`, which must land in 3..=5.
    pub fn from_records(records: &[AnnotationRecord]) -> Result<B2Matrix> {
        if records.is_empty() {
            return Err(Error::Corpus("cannot encode an empty record set".into()));
        }
        let mut cells = [[0u8; MAX_STUDENTS]; MAX_MINUTES];
        let mut max_minute = 0usize;
        let mut max_student = 0usize;
        for r in records {
            if r.student_index >= MAX_STUDENTS {
                return Err(Error::Corpus(format!(
                    "student_index {} out of range 0..{} for task {}/{}",
                    r.student_index, MAX_STUDENTS, r.group_id, r.task_id
                )));
            }
            if r.minute_index >= MAX_MINUTES {
                return Err(Error::Corpus(format!(
                    "minute_index {} exceeds the {}-minute cap for task {}/{}",
                    r.minute_index, MAX_MINUTES, r.group_id, r.task_id
                )));
            }
            if r.role == RoleCode::Empty {
                return Err(Error::Corpus("explicit Empty codes are not ingestable".into()));
            }
            cells[r.minute_index][r.student_index] = r.role.value();
            max_minute = max_minute.max(r.minute_index);
            max_student = max_student.max(r.student_index);
        }
        let matrix = B2Matrix {
            cells,
            duration_minutes: max_minute + 1,
            num_students: max_student + 1,
        };
        matrix.validate()?;
        Ok(matrix)
    }

    /// Constructs from a full cell grid; used by the generator.
    pub fn from_cells(
        cells: [[u8; MAX_STUDENTS]; MAX_MINUTES],
        duration_minutes: usize,
        num_students: usize,
    ) -> Result<B2Matrix> {
        let matrix = B2Matrix {
            cells,
            duration_minutes,
            num_students,
        };
        matrix.validate()?;
        Ok(matrix)
    }

    fn validate(&self) -> Result<()> {
        if !(1..=MAX_MINUTES).contains(&self.duration_minutes) {
            return Err(Error::Corpus(format!(
                "duration {} outside 1..={}",
                self.duration_minutes, MAX_MINUTES
            )));
        }
        if !(3..=MAX_STUDENTS).contains(&self.num_students) {
            return Err(Error::Corpus(format!(
                "student count {} outside 3..={}",
                self.num_students, MAX_STUDENTS
            )));
        }
        for (m, row) in self.cells.iter().enumerate() {
            for (s, &v) in row.iter().enumerate() {
                if RoleCode::from_value(v).is_none() {
                    return Err(Error::Corpus(format!("cell value {v} is not a role code")));
                }
                let padded = m >= self.duration_minutes || s >= self.num_students;
                if padded && v != 0 {
                    return Err(Error::Corpus(format!(
                        "padded cell (minute {m}, student {s}) holds nonzero code {v}"
                    )));
                }
            }
            if m < self.duration_minutes && self.cells[m].iter().all(|&v| v == 0) {
                return Err(Error::Corpus(format!(
                    "minute {m} is inside the task duration but has no codes"
                )));
            }
        }
        Ok(())
    }

    pub fn get(&self, minute: usize, student: usize) -> RoleCode {
        RoleCode::from_value(self.cells[minute][student]).expect("validated cell")
    }

    pub fn cells(&self) -> &[[u8; MAX_STUDENTS]; MAX_MINUTES] {
        &self.cells
    }

    pub fn duration_minutes(&self) -> usize {
        self.duration_minutes
    }

    pub fn num_students(&self) -> usize {
        self.num_students
    }

    /// Counts of each non-empty role over the whole grid, indexed by role-1.
    pub fn role_counts(&self) -> [usize; NUM_ROLES] {
        let mut counts = [0usize; NUM_ROLES];
        for row in &self.cells {
            for &v in row {
                if v != 0 {
                    counts[v as usize - 1] += 1;
                }
            }
        }
        counts
    }
}

/// Duration-normalized distribution over the 7 non-empty roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    bins: [f64; NUM_ROLES],
}

impl Histogram {
    pub fn bins(&self) -> &[f64; NUM_ROLES] {
        &self.bins
    }
}

/// Pools all coded cells of a matrix into a normalized role histogram.
/// Empty cells are unassigned, not observed, so they contribute nothing.
pub fn build_histogram(matrix: &B2Matrix) -> Result<Histogram> {
    let counts = matrix.role_counts();
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::Corpus("cannot build a histogram from an all-empty matrix".into()));
    }
    let mut bins = [0.0; NUM_ROLES];
    for (b, &c) in bins.iter_mut().zip(counts.iter()) {
        *b = c as f64 / total as f64;
    }
    Ok(Histogram { bins })
}

/// One (group, task, coder) training sample with both encodings, the coder's
/// own label, and the cross-coder ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSample {
    pub group_id: String,
    pub task_id: String,
    pub coder_id: String,
    pub matrix: B2Matrix,
    pub histogram: Histogram,
    pub label: CollabLabel,
    pub ground_truth: CollabLabel,
}

/// Majority vote over exactly three coder labels, with the median under the
/// label scale as the tie-breaker when all three differ.
pub fn resolve_ground_truth(labels: [CollabLabel; 3]) -> CollabLabel {
    let [a, b, c] = labels;
    if a == b || a == c {
        return a;
    }
    if b == c {
        return b;
    }
    let mut sorted = labels;
    sorted.sort();
    sorted[1]
}

/// Cohen's kappa between two equal-length annotation sequences.
///
/// `kappa = (p_o - p_e) / (1 - p_e)` with observed agreement `p_o` and
/// chance agreement `p_e` from the coders' marginal frequencies. Returns 1
/// when chance agreement saturates (both sequences constant and equal).
pub fn cohen_kappa<T: Ord + Copy>(a: &[T], b: &[T]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Corpus(format!(
            "kappa sequences differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::Corpus("kappa needs at least one item".into()));
    }
    let n = a.len() as f64;
    let observed = a.iter().zip(b).filter(|(x, y)| *x == *y).count() as f64 / n;

    let mut freq_a: BTreeMap<T, f64> = BTreeMap::new();
    let mut freq_b: BTreeMap<T, f64> = BTreeMap::new();
    for x in a {
        *freq_a.entry(*x).or_insert(0.0) += 1.0;
    }
    for y in b {
        *freq_b.entry(*y).or_insert(0.0) += 1.0;
    }
    let mut expected = 0.0;
    for (cat, fa) in &freq_a {
        if let Some(fb) = freq_b.get(cat) {
            expected += (fa / n) * (fb / n);
        }
    }
    if (1.0 - expected).abs() < 1e-12 {
        return Ok(1.0);
    }
    Ok((observed - expected) / (1.0 - expected))
}

/// Mean pairwise exact-agreement fraction across three coders' sequences.
pub fn average_pairwise_agreement<T: PartialEq>(sequences: [&[T]; 3]) -> Result<f64> {
    let len = sequences[0].len();
    if sequences.iter().any(|s| s.len() != len) {
        return Err(Error::Corpus("agreement sequences differ in length".into()));
    }
    if len == 0 {
        return Err(Error::Corpus("agreement needs at least one item".into()));
    }
    let pairs = [(0, 1), (0, 2), (1, 2)];
    let mut total = 0.0;
    for (i, j) in pairs {
        let agree = sequences[i]
            .iter()
            .zip(sequences[j])
            .filter(|(x, y)| x == y)
            .count();
        total += agree as f64 / len as f64;
    }
    Ok(total / 3.0)
}

const ROLES_HEADER: &str = "group_id,task_id,coder_id,student_index,minute_index,b2_code";
const LABELS_HEADER: &str = "group_id,task_id,coder_id,level_a";

fn split_fields<'a>(file: &str, line_no: usize, line: &'a str, want: usize) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = line.split(',').collect();
    if fields.len() != want {
        return Err(Error::Parse {
            file: file.into(),
            line: line_no,
            message: format!("expected {} comma-separated fields, found {}", want, fields.len()),
        });
    }
    Ok(fields)
}

/// Parses a roles file (header `group_id,task_id,coder_id,student_index,minute_index,b2_code`).
pub fn parse_roles(text: &str) -> Result<Vec<AnnotationRecord>> {
    let file = "roles";
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == ROLES_HEADER => {}
        Some((_, header)) => {
            return Err(Error::Parse {
                file: file.into(),
                line: 1,
                message: format!("bad header {header:?}, expected {ROLES_HEADER:?}"),
            })
        }
        None => {
            return Err(Error::Parse {
                file: file.into(),
                line: 1,
                message: "empty file".into(),
            })
        }
    }

    let mut records = Vec::new();
    let mut seen: BTreeSet<(String, String, String, usize, usize)> = BTreeSet::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let f = split_fields(file, line_no, line, 6)?;
        let student_index: usize = f[3].parse().map_err(|_| Error::Parse {
            file: file.into(),
            line: line_no,
            message: format!("bad student_index {:?}", f[3]),
        })?;
        let minute_index: usize = f[4].parse().map_err(|_| Error::Parse {
            file: file.into(),
            line: line_no,
            message: format!("bad minute_index {:?}", f[4]),
        })?;
        if minute_index >= MAX_MINUTES {
            return Err(Error::Parse {
                file: file.into(),
                line: line_no,
                message: format!("minute_index {minute_index} exceeds the {MAX_MINUTES}-minute cap"),
            });
        }
        if student_index >= MAX_STUDENTS {
            return Err(Error::Parse {
                file: file.into(),
                line: line_no,
                message: format!("student_index {student_index} out of range 0..{MAX_STUDENTS}"),
            });
        }
        let role = RoleCode::from_token(f[5]).ok_or_else(|| Error::Parse {
            file: file.into(),
            line: line_no,
            message: format!("unknown role token {:?}", f[5]),
        })?;
        let key = (
            f[0].to_string(),
            f[1].to_string(),
            f[2].to_string(),
            student_index,
            minute_index,
        );
        if !seen.insert(key) {
            return Err(Error::Parse {
                file: file.into(),
                line: line_no,
                message: format!(
                    "duplicate cell ({},{},{},student {},minute {})",
                    f[0], f[1], f[2], student_index, minute_index
                ),
            });
        }
        records.push(AnnotationRecord {
            group_id: f[0].to_string(),
            task_id: f[1].to_string(),
            coder_id: f[2].to_string(),
            student_index,
            minute_index,
            role,
        });
    }
    Ok(records)
}

/// Parses a labels file (header `group_id,task_id,coder_id,level_a`).
pub fn parse_labels(text: &str) -> Result<BTreeMap<(String, String, String), CollabLabel>> {
    let file = "labels";
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == LABELS_HEADER => {}
        Some((_, header)) => {
            return Err(Error::Parse {
                file: file.into(),
                line: 1,
                message: format!("bad header {header:?}, expected {LABELS_HEADER:?}"),
            })
        }
        None => {
            return Err(Error::Parse {
                file: file.into(),
                line: 1,
                message: "empty file".into(),
            })
        }
    }

    let mut labels = BTreeMap::new();
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let f = split_fields(file, line_no, line, 4)?;
        let label = CollabLabel::from_token(f[3]).ok_or_else(|| Error::Parse {
            file: file.into(),
            line: line_no,
            message: format!("unknown label token {:?}", f[3]),
        })?;
        let key = (f[0].to_string(), f[1].to_string(), f[2].to_string());
        if labels.insert(key, label).is_some() {
            return Err(Error::Parse {
                file: file.into(),
                line: line_no,
                message: format!("duplicate label row for ({},{},{})", f[0], f[1], f[2]),
            });
        }
    }
    Ok(labels)
}

/// Parses roles + labels file contents into fully resolved task samples.
///
/// One sample is produced per (group, task, coder) present in the roles
/// file; its ground truth is resolved across that task's three coders.
pub fn parse_annotations(roles_text: &str, labels_text: &str) -> Result<Vec<TaskSample>> {
    let records = parse_roles(roles_text)?;
    let labels = parse_labels(labels_text)?;

    // Group records per (group, task, coder), preserving key order.
    let mut by_sample: BTreeMap<(String, String, String), Vec<AnnotationRecord>> = BTreeMap::new();
    for r in records {
        by_sample
            .entry((r.group_id.clone(), r.task_id.clone(), r.coder_id.clone()))
            .or_default()
            .push(r);
    }
    for key in labels.keys() {
        if !by_sample.contains_key(key) {
            return Err(Error::Corpus(format!(
                "label row ({},{},{}) has no role rows",
                key.0, key.1, key.2
            )));
        }
    }

    // Collect coder labels per task for ground-truth resolution.
    let mut task_labels: BTreeMap<(String, String), Vec<CollabLabel>> = BTreeMap::new();
    for key in by_sample.keys() {
        let label = *labels.get(key).ok_or_else(|| {
            Error::Corpus(format!(
                "no label row for ({},{},{})",
                key.0, key.1, key.2
            ))
        })?;
        task_labels
            .entry((key.0.clone(), key.1.clone()))
            .or_default()
            .push(label);
    }
    let mut ground_truth: BTreeMap<(String, String), CollabLabel> = BTreeMap::new();
    for (task_key, coder_labels) in &task_labels {
        if coder_labels.len() != 3 {
            return Err(Error::Corpus(format!(
                "task ({},{}) has {} coders, expected exactly 3",
                task_key.0,
                task_key.1,
                coder_labels.len()
            )));
        }
        ground_truth.insert(
            task_key.clone(),
            resolve_ground_truth([coder_labels[0], coder_labels[1], coder_labels[2]]),
        );
    }

    let mut samples = Vec::with_capacity(by_sample.len());
    for (key, records) in &by_sample {
        let matrix = B2Matrix::from_records(records)?;
        let histogram = build_histogram(&matrix)?;
        let task_key = (key.0.clone(), key.1.clone());
        samples.push(TaskSample {
            group_id: key.0.clone(),
            task_id: key.1.clone(),
            coder_id: key.2.clone(),
            matrix,
            histogram,
            label: labels[key],
            ground_truth: ground_truth[&task_key],
        });
    }
    Ok(samples)
}

/// Serializes samples back to roles-file text (inverse of [`parse_roles`]).
pub fn write_roles_csv(samples: &[TaskSample]) -> String {
    let mut out = String::from(ROLES_HEADER);
    out.push('\n');
    for s in samples {
        for minute in 0..s.matrix.duration_minutes() {
            for student in 0..s.matrix.num_students() {
                let role = s.matrix.get(minute, student);
                if role != RoleCode::Empty {
                    out.push_str(&format!(
                        "{},{},{},{},{},{}\n",
                        s.group_id,
                        s.task_id,
                        s.coder_id,
                        student,
                        minute,
                        role.token()
                    ));
                }
            }
        }
    }
    out
}

/// Serializes coder labels back to labels-file text (inverse of [`parse_labels`]).
pub fn write_labels_csv(samples: &[TaskSample]) -> String {
    let mut out = String::from(LABELS_HEADER);
    out.push('\n');
    for s in samples {
        out.push_str(&format!(
            "{},{},{},{}\n",
            s.group_id,
            s.task_id,
            s.coder_id,
            s.label.token()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(g: &str, t: &str, c: &str, student: usize, minute: usize, role: RoleCode) -> AnnotationRecord {
        AnnotationRecord {
            group_id: g.into(),
            task_id: t.into(),
            coder_id: c.into(),
            student_index: student,
            minute_index: minute,
            role,
        }
    }

    #[test]
    fn role_tokens_round_trip() {
        for role in RoleCode::NON_EMPTY {
            assert_eq!(RoleCode::from_token(role.token()), Some(role));
        }
        assert_eq!(RoleCode::from_token("GG"), Some(RoleCode::GroupGuide));
        assert_eq!(RoleCode::GroupGuide.value(), 1);
        assert_eq!(RoleCode::from_token("XX"), None);
    }

    #[test]
    fn label_order_matches_scale() {
        let all = CollabLabel::ALL;
        for w in all.windows(2) {
            assert!(w[0] < w[1]);
        }
        assert_eq!(CollabLabel::Effective.distance(CollabLabel::WorkingIndependently), 4);
    }

    #[test]
    fn encode_four_students_four_minutes() {
        let mut records = Vec::new();
        for minute in 0..4 {
            for student in 0..4 {
                records.push(record("g1", "t1", "c1", student, minute, RoleCode::Contributor));
            }
        }
        let m = B2Matrix::from_records(&records).unwrap();
        assert_eq!(m.duration_minutes(), 4);
        assert_eq!(m.num_students(), 4);
        for minute in 0..MAX_MINUTES {
            for student in 0..MAX_STUDENTS {
                let expect = if minute < 4 && student < 4 { 2 } else { 0 };
                assert_eq!(m.get(minute, student).value(), expect);
            }
        }
    }

    #[test]
    fn encode_full_occupancy() {
        let mut records = Vec::new();
        for minute in 0..MAX_MINUTES {
            for student in 0..MAX_STUDENTS {
                records.push(record("g", "t", "c", student, minute, RoleCode::LoneSolver));
            }
        }
        let m = B2Matrix::from_records(&records).unwrap();
        assert_eq!(m.duration_minutes(), 24);
        assert_eq!(m.num_students(), 5);
        assert!(m.cells().iter().flatten().all(|&v| v == 7));
    }

    #[test]
    fn encode_single_minute_roles() {
        let records = vec![
            record("g", "t", "c", 0, 0, RoleCode::GroupGuide),
            record("g", "t", "c", 1, 0, RoleCode::Contributor),
            record("g", "t", "c", 2, 0, RoleCode::Follower),
        ];
        let m = B2Matrix::from_records(&records).unwrap();
        assert_eq!(m.cells()[0], [1, 2, 3, 0, 0]);
        assert!(m.cells()[1..].iter().flatten().all(|&v| v == 0));
    }

    #[test]
    fn encode_rejects_bad_records() {
        assert!(B2Matrix::from_records(&[]).is_err());
        let too_wide = vec![record("g", "t", "c", 5, 0, RoleCode::Follower)];
        assert!(B2Matrix::from_records(&too_wide).is_err());
        // A gap minute inside the duration violates the occupancy invariant.
        let gap = vec![
            record("g", "t", "c", 0, 0, RoleCode::Follower),
            record("g", "t", "c", 1, 0, RoleCode::Follower),
            record("g", "t", "c", 2, 0, RoleCode::Follower),
            record("g", "t", "c", 0, 2, RoleCode::Follower),
        ];
        assert!(B2Matrix::from_records(&gap).is_err());
    }

    #[test]
    fn histogram_direct_counts() {
        // 4 GG + 8 C + 4 F over 4 minutes, 4 students.
        let mut records = Vec::new();
        for minute in 0..4 {
            records.push(record("g", "t", "c", 0, minute, RoleCode::GroupGuide));
            records.push(record("g", "t", "c", 1, minute, RoleCode::Contributor));
            records.push(record("g", "t", "c", 2, minute, RoleCode::Contributor));
            records.push(record("g", "t", "c", 3, minute, RoleCode::Follower));
        }
        let m = B2Matrix::from_records(&records).unwrap();
        let h = build_histogram(&m).unwrap();
        assert_eq!(h.bins(), &[0.25, 0.5, 0.25, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn histogram_single_role_mass() {
        let mut records = Vec::new();
        for minute in 0..6 {
            for student in 0..3 {
                records.push(record("g", "t", "c", student, minute, RoleCode::LoneSolver));
            }
        }
        let m = B2Matrix::from_records(&records).unwrap();
        let h = build_histogram(&m).unwrap();
        assert_eq!(h.bins(), &[0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn histogram_duration_invariant() {
        // Same role proportions at durations 8 and 24: one GG + two C per minute.
        let build = |minutes: usize| {
            let mut records = Vec::new();
            for minute in 0..minutes {
                records.push(record("g", "t", "c", 0, minute, RoleCode::GroupGuide));
                records.push(record("g", "t", "c", 1, minute, RoleCode::Contributor));
                records.push(record("g", "t", "c", 2, minute, RoleCode::Contributor));
            }
            build_histogram(&B2Matrix::from_records(&records).unwrap()).unwrap()
        };
        let short = build(8);
        let long = build(24);
        for (a, b) in short.bins().iter().zip(long.bins()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((short.bins().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ground_truth_majority_and_median() {
        use CollabLabel::*;
        // Paper's own worked example: S, P, NI resolves to the median P.
        assert_eq!(resolve_ground_truth([Satisfactory, Progressing, NeedsImprovement]), Progressing);
        assert_eq!(
            resolve_ground_truth([WorkingIndependently, WorkingIndependently, WorkingIndependently]),
            WorkingIndependently
        );
        assert_eq!(resolve_ground_truth([Effective, Progressing, WorkingIndependently]), Progressing);
    }

    #[test]
    fn ground_truth_exhaustive_vs_oracle() {
        // Brute-force oracle: count occurrences; majority if any count >= 2,
        // else the middle element after sorting.
        fn oracle(labels: [CollabLabel; 3]) -> CollabLabel {
            for candidate in CollabLabel::ALL {
                if labels.iter().filter(|&&l| l == candidate).count() >= 2 {
                    return candidate;
                }
            }
            let mut sorted = labels;
            sorted.sort();
            sorted[1]
        }
        for a in CollabLabel::ALL {
            for b in CollabLabel::ALL {
                for c in CollabLabel::ALL {
                    assert_eq!(resolve_ground_truth([a, b, c]), oracle([a, b, c]), "{a:?} {b:?} {c:?}");
                }
            }
        }
    }

    #[test]
    fn ground_truth_permutation_invariant() {
        for a in CollabLabel::ALL {
            for b in CollabLabel::ALL {
                for c in CollabLabel::ALL {
                    let base = resolve_ground_truth([a, b, c]);
                    assert_eq!(resolve_ground_truth([a, c, b]), base);
                    assert_eq!(resolve_ground_truth([b, a, c]), base);
                    assert_eq!(resolve_ground_truth([b, c, a]), base);
                    assert_eq!(resolve_ground_truth([c, a, b]), base);
                    assert_eq!(resolve_ground_truth([c, b, a]), base);
                }
            }
        }
    }

    #[test]
    fn kappa_hand_example() {
        use CollabLabel::*;
        let a = [Satisfactory, Satisfactory, Progressing, Progressing];
        let b = [Satisfactory, Progressing, Progressing, Progressing];
        // p_o = 0.75, p_e = 0.5*0.25 + 0.5*0.75 = 0.5, kappa = 0.5.
        let k = cohen_kappa(&a, &b).unwrap();
        assert!((k - 0.5).abs() < 1e-9);
    }

    #[test]
    fn kappa_identical_sequences() {
        use CollabLabel::*;
        let a = [Satisfactory, Progressing, Satisfactory, NeedsImprovement];
        assert!((cohen_kappa(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        // Constant identical sequences saturate chance agreement; defined as 1.
        let c = [Progressing, Progressing];
        assert!((cohen_kappa(&c, &c).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kappa_symmetric_and_bounded() {
        use CollabLabel::*;
        let a = [Effective, Satisfactory, Progressing, Progressing, WorkingIndependently, Satisfactory];
        let b = [Satisfactory, Satisfactory, Progressing, NeedsImprovement, WorkingIndependently, Effective];
        let ab = cohen_kappa(&a, &b).unwrap();
        let ba = cohen_kappa(&b, &a).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!((-1.0..=1.0).contains(&ab));
        assert!(cohen_kappa(&a, &b[..5]).is_err());
    }

    #[test]
    fn agreement_examples() {
        use CollabLabel::*;
        let x = [Satisfactory, Progressing, Satisfactory];
        assert!((average_pairwise_agreement([&x, &x, &x]).unwrap() - 1.0).abs() < 1e-12);

        // Coders 1 and 2 agree everywhere; coder 3 agrees with neither.
        let a = [Satisfactory, Satisfactory];
        let b = [Satisfactory, Satisfactory];
        let c = [Progressing, Effective];
        let got = average_pairwise_agreement([&a, &b, &c]).unwrap();
        assert!((got - 1.0 / 3.0).abs() < 1e-12);
    }

    fn tiny_corpus() -> (String, String) {
        let mut roles = String::from("group_id,task_id,coder_id,student_index,minute_index,b2_code\n");
        for coder in ["c1", "c2", "c3"] {
            for minute in 0..4 {
                for student in 0..4 {
                    let tok = if student == 0 { "GG" } else { "C" };
                    roles.push_str(&format!("g1,t1,{coder},{student},{minute},{tok}\n"));
                }
            }
        }
        let labels = "group_id,task_id,coder_id,level_a\n\
                      g1,t1,c1,S\ng1,t1,c2,P\ng1,t1,c3,NI\n"
            .to_string();
        (roles, labels)
    }

    #[test]
    fn parse_three_coders_share_ground_truth() {
        let (roles, labels) = tiny_corpus();
        let samples = parse_annotations(&roles, &labels).unwrap();
        assert_eq!(samples.len(), 3);
        for s in &samples {
            assert_eq!(s.ground_truth, CollabLabel::Progressing);
        }
        assert_eq!(samples[0].label, CollabLabel::Satisfactory);
        assert_eq!(samples[0].matrix.get(0, 0), RoleCode::GroupGuide);
    }

    #[test]
    fn parse_rejects_bad_inputs() {
        let (roles, labels) = tiny_corpus();

        let bad_role = roles.replace("g1,t1,c1,0,0,GG", "g1,t1,c1,0,0,ZZ");
        assert!(matches!(
            parse_annotations(&bad_role, &labels),
            Err(Error::Parse { line: 2, .. })
        ));

        let bad_minute = format!("{roles}g1,t1,c1,0,24,GG\n");
        assert!(parse_annotations(&bad_minute, &labels).is_err());

        let dup = format!("{roles}g1,t1,c1,0,0,GG\n");
        assert!(parse_annotations(&dup, &labels).is_err());

        let extra_col = roles.replace(
            "group_id,task_id,coder_id,student_index,minute_index,b2_code",
            "group_id,task_id,coder_id,student_index,minute_index,b2_code,extra",
        );
        assert!(parse_annotations(&extra_col, &labels).is_err());

        let missing_label = labels.replace("g1,t1,c3,NI\n", "");
        assert!(parse_annotations(&roles, &missing_label).is_err());

        let bad_label = labels.replace("g1,t1,c2,P", "g1,t1,c2,QQ");
        assert!(parse_annotations(&roles, &bad_label).is_err());
    }

    #[test]
    fn roles_round_trip_cell_for_cell() {
        let (roles, labels) = tiny_corpus();
        let samples = parse_annotations(&roles, &labels).unwrap();
        let roles2 = write_roles_csv(&samples);
        let labels2 = write_labels_csv(&samples);
        let reparsed = parse_annotations(&roles2, &labels2).unwrap();
        assert_eq!(samples, reparsed);
    }
}
