use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// File listing per-image attributes for multi-attribute datasets.
pub const ATTRIBUTE_FILE: &str = "attributes.txt";

const IMAGE_EXTENSIONS: &[&str] = &["png", "jpg", "jpeg"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LabelMode {
    #[default]
    SingleClass,
    MultiAttribute,
}

impl LabelMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelMode::SingleClass => "single-class",
            LabelMode::MultiAttribute => "multi-attribute",
        }
    }
}

impl FromStr for LabelMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single-class" => Ok(LabelMode::SingleClass),
            "multi-attribute" => Ok(LabelMode::MultiAttribute),
            other => Err(Error::config(format!("unknown label mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Label {
    Class(usize),
    Attributes(Vec<u8>),
}

impl Label {
    /// Dense target row: one-hot for a class, 0/1 for attributes.
    pub fn target(&self, num_classes: usize) -> Vec<f64> {
        match self {
            Label::Class(k) => {
                let mut v = vec![0.0; num_classes];
                v[*k] = 1.0;
                v
            }
            Label::Attributes(bits) => bits.iter().map(|&b| f64::from(b)).collect(),
        }
    }

    fn encode(&self) -> String {
        match self {
            Label::Class(k) => k.to_string(),
            Label::Attributes(bits) => bits.iter().map(|b| b.to_string()).collect::<Vec<_>>().join(","),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ManifestEntry {
    /// Path relative to the manifest root, `/`-separated.
    pub path: String,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    HeldOut,
    All,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::HeldOut => "held-out",
            Split::All => "all",
        }
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "heldout" | "held-out" | "test" => Ok(Split::HeldOut),
            "all" => Ok(Split::All),
            other => Err(Error::config(format!("unknown split `{other}`"))),
        }
    }
}

/// Ordered list of labelled images under one dataset root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub entries: Vec<ManifestEntry>,
    pub num_classes: usize,
    pub label_mode: LabelMode,
    /// Class directory names or attribute names, indexed by label position.
    pub label_names: Vec<String>,
}

fn is_image(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn sorted_children(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry
            .file_name()
            .into_string()
            .map_err(|n| Error::Manifest(format!("non UTF-8 file name {n:?}")))?;
        out.push((name, entry.path()));
    }
    out.sort();
    Ok(out)
}

fn check_path_text(p: &str) -> Result<()> {
    if p.contains('\t') || p.contains('\n') || p.contains('\r') {
        return Err(Error::Manifest(format!("path {p:?} contains a tab or newline")));
    }
    Ok(())
}

pub fn build_manifest(root: &Path, label_mode: LabelMode) -> Result<DatasetManifest> {
    if !root.is_dir() {
        return Err(Error::NotFound(root.to_path_buf()));
    }
    let manifest = match label_mode {
        LabelMode::SingleClass => scan_class_dirs(root)?,
        LabelMode::MultiAttribute => read_attribute_file(root)?,
    };
    if manifest.entries.is_empty() {
        return Err(Error::EmptyDataset(format!("no images under {}", root.display())));
    }
    Ok(manifest)
}

fn scan_class_dirs(root: &Path) -> Result<DatasetManifest> {
    let mut label_names = Vec::new();
    let mut entries = Vec::new();
    for (name, path) in sorted_children(root)? {
        if !path.is_dir() {
            continue;
        }
        let class = label_names.len();
        check_path_text(&name)?;
        label_names.push(name.clone());
        for (file, fpath) in sorted_children(&path)? {
            if fpath.is_file() && is_image(&fpath) {
                check_path_text(&file)?;
                entries.push(ManifestEntry {
                    path: format!("{name}/{file}"),
                    label: Label::Class(class),
                });
            }
        }
    }
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        entries,
        num_classes: label_names.len(),
        label_mode: LabelMode::SingleClass,
        label_names,
    })
}

fn read_attribute_file(root: &Path) -> Result<DatasetManifest> {
    let path = root.join(ATTRIBUTE_FILE);
    if !path.is_file() {
        return Err(Error::NotFound(path));
    }
    let text = fs::read_to_string(&path)?;
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let label_names: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Manifest(format!("{} has no header", path.display())))?
        .split_whitespace()
        .map(str::to_owned)
        .collect();
    if label_names.is_empty() {
        return Err(Error::Manifest("attribute header is empty".into()));
    }
    let mut entries = Vec::new();
    for line in lines {
        let mut fields = line.split_whitespace();
        let rel = fields.next().expect("non-empty line");
        check_path_text(rel)?;
        let bits = fields
            .map(|v| match v {
                "1" => Ok(1u8),
                "0" | "-1" => Ok(0u8),
                other => Err(Error::Manifest(format!("attribute value `{other}` for {rel}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if bits.len() != label_names.len() {
            return Err(Error::Manifest(format!(
                "{rel} has {} attributes, header declares {}",
                bits.len(),
                label_names.len()
            )));
        }
        entries.push(ManifestEntry {
            path: rel.to_owned(),
            label: Label::Attributes(bits),
        });
    }
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(DatasetManifest {
        root: root.to_path_buf(),
        num_classes: label_names.len(),
        entries,
        label_mode: LabelMode::MultiAttribute,
        label_names,
    })
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn image_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(entry.path.replace('/', std::path::MAIN_SEPARATOR_STR))
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::Manifest("num_classes must be positive".into()));
        }
        for e in &self.entries {
            match (&e.label, self.label_mode) {
                (Label::Class(k), LabelMode::SingleClass) if *k < self.num_classes => {}
                (Label::Attributes(bits), LabelMode::MultiAttribute)
                    if bits.len() == self.num_classes && bits.iter().all(|&b| b <= 1) => {}
                (label, mode) => {
                    return Err(Error::Manifest(format!(
                        "label {label:?} of {} is invalid in {} mode with {} classes",
                        e.path,
                        mode.as_str(),
                        self.num_classes
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn with_entries(&self, entries: Vec<ManifestEntry>) -> Self {
        Self {
            entries,
            ..self.clone()
        }
    }

    /// Deterministic 90/10 split. Entries are ranked by the SHA-256 of their
    /// relative path and the first `ceil(n / 10)` form the held-out part
    /// (none when the manifest has a single entry). Manifest order is kept
    /// within each part.
    pub fn split(&self) -> (DatasetManifest, DatasetManifest) {
        let n = self.entries.len();
        let held = if n < 2 { 0 } else { n.div_ceil(10) };
        let mut ranked: Vec<(Vec<u8>, usize)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| (Sha256::digest(e.path.as_bytes()).to_vec(), i))
            .collect();
        ranked.sort();
        let mut is_held = vec![false; n];
        for (_, i) in ranked.iter().take(held) {
            is_held[*i] = true;
        }
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (i, e) in self.entries.iter().enumerate() {
            if is_held[i] {
                test.push(e.clone());
            } else {
                train.push(e.clone());
            }
        }
        (self.with_entries(train), self.with_entries(test))
    }

    pub fn select(&self, split: Split) -> DatasetManifest {
        match split {
            Split::All => self.clone(),
            Split::Train => self.split().0,
            Split::HeldOut => self.split().1,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# root={}", self.root.display());
        let _ = writeln!(s, "# label_mode={}", self.label_mode.as_str());
        let _ = writeln!(s, "# num_classes={}", self.num_classes);
        let _ = writeln!(s, "# labels={}", self.label_names.join(","));
        for e in &self.entries {
            let _ = writeln!(s, "{}\t{}", e.path, e.label.encode());
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut root = None;
        let mut label_mode = None;
        let mut num_classes = None;
        let mut label_names = Vec::new();
        let mut entries = Vec::new();
        let mut raw_labels = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.trim().split_once('=') {
                    match k.trim() {
                        "root" => root = Some(PathBuf::from(v)),
                        "label_mode" => label_mode = Some(v.trim().parse::<LabelMode>()?),
                        "num_classes" => {
                            num_classes = Some(
                                v.trim()
                                    .parse::<usize>()
                                    .map_err(|e| Error::Manifest(format!("line {}: num_classes: {e}", lineno + 1)))?,
                            )
                        }
                        "labels" => label_names = v.split(',').filter(|s| !s.is_empty()).map(str::to_owned).collect(),
                        _ => {}
                    }
                }
                continue;
            }
            let (path, label_field) = line
                .split_once('\t')
                .ok_or_else(|| Error::Manifest(format!("line {}: expected path<TAB>label", lineno + 1)))?;
            raw_labels.push((lineno + 1, path.to_owned(), label_field.trim().to_owned()));
        }
        let root = root.ok_or_else(|| Error::Manifest("missing `# root=` header".into()))?;
        for (lineno, path, label_field) in raw_labels {
            let label = if label_field.contains(',') || label_mode == Some(LabelMode::MultiAttribute) {
                let bits = label_field
                    .split(',')
                    .map(|b| match b {
                        "0" => Ok(0u8),
                        "1" => Ok(1u8),
                        other => Err(Error::Manifest(format!("line {lineno}: attribute `{other}`"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                Label::Attributes(bits)
            } else {
                Label::Class(
                    label_field
                        .parse()
                        .map_err(|e| Error::Manifest(format!("line {lineno}: class index: {e}")))?,
                )
            };
            entries.push(ManifestEntry { path, label });
        }
        let label_mode = label_mode.unwrap_or(match entries.first().map(|e| &e.label) {
            Some(Label::Attributes(_)) => LabelMode::MultiAttribute,
            _ => LabelMode::SingleClass,
        });
        let num_classes = match num_classes {
            Some(n) => n,
            None => entries
                .iter()
                .map(|e| match &e.label {
                    Label::Class(k) => k + 1,
                    Label::Attributes(b) => b.len(),
                })
                .max()
                .unwrap_or(0),
        };
        let manifest = DatasetManifest {
            root,
            entries,
            num_classes,
            label_mode,
            label_names,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::util::write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.is_file() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        Self::parse(&fs::read_to_string(path)?)
    }
}
