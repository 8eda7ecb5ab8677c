//! Artifact layout inside the shared `--out` directory, plus hash-checked
//! loaders with "which stage to run first" hints and the dataset manifest.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use wavejam::classifier::ModelParams;
use wavejam::green::{source_tag, GreenOperator};
use wavejam::{NullspaceProjector, TriMesh};

use crate::error::{io_at, CliError, Result};

/// The `--out` directory every pipeline stage shares.
#[derive(Debug, Clone)]
pub struct OutDir {
    root: PathBuf,
}

impl OutDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn ensure_root(&self) -> Result<()> {
        std::fs::create_dir_all(&self.root).map_err(io_at(&self.root))
    }

    pub fn mesh(&self) -> PathBuf {
        self.root.join("mesh.txt")
    }

    pub fn green_interferer(&self) -> PathBuf {
        self.root.join("green_interferer.wgrn")
    }

    pub fn green_intruder(&self) -> PathBuf {
        self.root.join("green_intruder.wgrn")
    }

    pub fn projector(&self) -> PathBuf {
        self.root.join("projector.wprj")
    }

    pub fn precompute_log(&self) -> PathBuf {
        self.root.join("precompute_log.txt")
    }

    pub fn dataset_dir(&self) -> PathBuf {
        self.root.join("dataset")
    }

    pub fn split_dir(&self, split: Split) -> PathBuf {
        self.dataset_dir().join(split.as_str())
    }

    pub fn manifest(&self) -> PathBuf {
        self.dataset_dir().join("manifest.csv")
    }

    pub fn model(&self) -> PathBuf {
        self.root.join("model.wnet")
    }

    pub fn train_log(&self) -> PathBuf {
        self.root.join("train_log.csv")
    }

    pub fn attacks_dir(&self) -> PathBuf {
        self.root.join("attacks")
    }

    pub fn attack_report(&self) -> PathBuf {
        self.attacks_dir().join("report.csv")
    }

    pub fn evaluation(&self) -> PathBuf {
        self.root.join("evaluation.csv")
    }

    pub fn bench(&self) -> PathBuf {
        self.root.join("bench.csv")
    }
}

fn missing(path: &Path, stage: &str) -> CliError {
    CliError::MissingArtifact {
        path: path.to_path_buf(),
        hint: format!("run `wavejam {stage}` with the same --out directory first"),
    }
}

/// Remaps a not-found failure from a loader into the missing-artifact hint.
fn or_missing<T>(r: wavejam::Result<T>, path: &Path, stage: &str) -> Result<T> {
    r.map_err(|e| match e {
        wavejam::Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => missing(path, stage),
        other => CliError::Core(other),
    })
}

fn check_hash(found: u64, expected: u64, path: &Path) -> Result<()> {
    if found != expected {
        return Err(CliError::Core(wavejam::Error::ConfigHashMismatch {
            path: path.display().to_string(),
            found,
            expected,
        }));
    }
    Ok(())
}

pub fn load_mesh(out: &OutDir, expected_hash: u64) -> Result<TriMesh<f64>> {
    let path = out.mesh();
    or_missing(TriMesh::load(&path, Some(expected_hash)), &path, "mesh")
}

pub fn load_green(
    out: &OutDir,
    which: GreenKind,
    expected_hash: u64,
) -> Result<GreenOperator<f64>> {
    let (path, want_tag) = match which {
        GreenKind::Interferer => (out.green_interferer(), source_tag::INTERFERER),
        GreenKind::Intruder => (out.green_intruder(), source_tag::INTRUDER),
    };
    let (op, tag, hash) = or_missing(GreenOperator::load(&path), &path, "precompute")?;
    if tag != want_tag {
        return Err(CliError::Core(wavejam::Error::format(
            &path,
            format!("source tag {tag} does not match the expected {want_tag}"),
        )));
    }
    check_hash(hash, expected_hash, &path)?;
    Ok(op)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreenKind {
    Interferer,
    Intruder,
}

pub fn load_projector(out: &OutDir, expected_hash: u64) -> Result<NullspaceProjector<f64>> {
    let path = out.projector();
    let (proj, hash) = or_missing(NullspaceProjector::load(&path), &path, "precompute")?;
    check_hash(hash, expected_hash, &path)?;
    Ok(proj)
}

pub fn load_model(out: &OutDir, expected_hash: u64) -> Result<ModelParams<f64>> {
    let path = out.model();
    let (model, hash) = or_missing(ModelParams::load(&path), &path, "train")?;
    check_hash(hash, expected_hash, &path)?;
    Ok(model)
}

// ---- dataset manifest ----------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
    Val,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Test, Split::Val];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Val => "val",
        }
    }

    /// Index used in the seed-derivation tag chain.
    pub fn index(self) -> u64 {
        match self {
            Split::Train => 0,
            Split::Test => 1,
            Split::Val => 2,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            "val" => Some(Split::Val),
            _ => None,
        }
    }
}

/// One dataset example: where it lives and how it was generated.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestRow {
    pub id: usize,
    pub split: Split,
    pub frequency_hz: f64,
    /// True = malicious (at or below the label threshold).
    pub label: bool,
    /// Noise realization seed for this example.
    pub seed: u64,
    /// Spectrogram CSV path relative to the out directory.
    pub path: String,
}

const MANIFEST_HEADER: &str = "id,split,frequency_hz,label,seed,path";

pub fn write_manifest(path: &Path, rows: &[ManifestRow]) -> Result<()> {
    let mut text = String::with_capacity(rows.len() * 48 + 64);
    text.push_str(MANIFEST_HEADER);
    text.push('\n');
    for r in rows {
        writeln!(
            text,
            "{},{},{},{},{},{}",
            r.id,
            r.split.as_str(),
            r.frequency_hz,
            u8::from(r.label),
            r.seed,
            r.path
        )
        .expect("string writes cannot fail");
    }
    let mut f = std::fs::File::create(path).map_err(io_at(path))?;
    f.write_all(text.as_bytes()).map_err(io_at(path))
}

pub fn read_manifest(out: &OutDir) -> Result<Vec<ManifestRow>> {
    let path = out.manifest();
    let text = std::fs::read_to_string(&path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            missing(&path, "gendata")
        } else {
            (io_at(&path))(e)
        }
    })?;
    let bad = |line: usize, msg: String| {
        CliError::Core(wavejam::Error::format(
            &path,
            format!("line {line}: {msg}"),
        ))
    };
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            if line != MANIFEST_HEADER {
                return Err(bad(1, format!("unexpected header {line:?}")));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 6 {
            return Err(bad(i + 1, format!("expected 6 fields, got {}", cells.len())));
        }
        let id = cells[0]
            .parse()
            .map_err(|_| bad(i + 1, "bad id".into()))?;
        let split =
            Split::parse(cells[1]).ok_or_else(|| bad(i + 1, format!("bad split {:?}", cells[1])))?;
        let frequency_hz = cells[2]
            .parse()
            .map_err(|_| bad(i + 1, "bad frequency".into()))?;
        let label = match cells[3] {
            "0" => false,
            "1" => true,
            other => return Err(bad(i + 1, format!("bad label {other:?}"))),
        };
        let seed = cells[4]
            .parse()
            .map_err(|_| bad(i + 1, "bad seed".into()))?;
        rows.push(ManifestRow {
            id,
            split,
            frequency_hz,
            label,
            seed,
            path: cells[5].to_string(),
        });
    }
    if rows.is_empty() {
        return Err(bad(1, "manifest has no examples".into()));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutDir::new(dir.path());
        std::fs::create_dir_all(out.dataset_dir()).unwrap();
        let rows = vec![
            ManifestRow {
                id: 0,
                split: Split::Train,
                frequency_hz: 250.0,
                label: true,
                seed: 77,
                path: "dataset/train/ex_0000.csv".into(),
            },
            ManifestRow {
                id: 1,
                split: Split::Val,
                frequency_hz: 750.0,
                label: false,
                seed: 78,
                path: "dataset/val/ex_0001.csv".into(),
            },
        ];
        write_manifest(&out.manifest(), &rows).unwrap();
        assert_eq!(read_manifest(&out).unwrap(), rows);
    }

    #[test]
    fn missing_manifest_names_the_stage_to_run() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutDir::new(dir.path());
        let err = read_manifest(&out).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("gendata"), "{err}");
    }

    #[test]
    fn corrupt_manifest_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let out = OutDir::new(dir.path());
        std::fs::create_dir_all(out.dataset_dir()).unwrap();
        std::fs::write(out.manifest(), "id,split,frequency_hz,label,seed,path\n0,weird,1,1,1,p\n")
            .unwrap();
        let err = read_manifest(&out).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
