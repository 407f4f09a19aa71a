//! On-disk formats: dataset directories, model files, truth edge lists and
//! commented CSV tables. Every writer goes through a temporary file or
//! directory that is renamed into place once complete.

use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use sbl_core::model::Component;
use sbl_core::simulate::{GroundTruth, SIGNAL_BASES};
use sbl_core::{Edge, NetworkDataset, SblModel, SymmetricNetwork};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const FORMAT_VERSION: u32 = 1;
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST: &str = "manifest.json";

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| CliError::io(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

/// An output directory assembled under a temporary name.
///
/// `commit` renames it to the target, which must be absent or empty.
/// Dropping without committing removes the partial output.
pub struct StagedDir {
    target: PathBuf,
    staging: Option<tempfile::TempDir>,
}

impl StagedDir {
    pub fn new(target: &Path) -> Result<Self> {
        if target.exists() {
            let mut entries = fs::read_dir(target).map_err(|e| CliError::io(target, e))?;
            if entries.next().is_some() {
                return Err(CliError::Usage(format!(
                    "output directory {} exists and is not empty",
                    target.display()
                )));
            }
        }
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(|e| CliError::io(&parent, e))?;
        let staging = tempfile::Builder::new()
            .prefix(".sbl-staging-")
            .tempdir_in(&parent)
            .map_err(|e| CliError::io(&parent, e))?;
        Ok(StagedDir {
            target: target.to_path_buf(),
            staging: Some(staging),
        })
    }

    pub fn path(&self, relative: impl AsRef<Path>) -> PathBuf {
        self.staging.as_ref().expect("not committed").path().join(relative)
    }

    pub fn write(&self, relative: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
        let path = self.path(relative);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))
    }

    pub fn commit(mut self) -> Result<PathBuf> {
        let staging = self.staging.take().expect("not committed").keep();
        if self.target.exists() {
            fs::remove_dir(&self.target).map_err(|e| CliError::io(&self.target, e))?;
        }
        fs::rename(&staging, &self.target).map_err(|e| CliError::io(&self.target, e))?;
        Ok(self.target.clone())
    }
}

/// `# key=value` lines carried at the top of every CSV table.
pub fn provenance(seed: Option<u64>, extra: &[(&str, String)]) -> Vec<u8> {
    let mut out = format!("# tool_version={TOOL_VERSION}\n");
    if let Some(s) = seed {
        out.push_str(&format!("# seed={s}\n"));
    }
    for (k, v) in extra {
        out.push_str(&format!("# {k}={v}\n"));
    }
    out.into_bytes()
}

/// Header comments followed by a CSV table of serializable rows.
pub fn commented_csv<T: Serialize>(comments: Vec<u8>, rows: &[T]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(comments);
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Usage(format!("csv encoding: {e}")))?;
    }
    w.into_inner()
        .map_err(|e| CliError::Usage(format!("csv encoding: {}", e.error())))
}

fn csv_reader(path: &Path, has_headers: bool) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::io(path, io),
        other => CliError::format(path, format!("{other:?}")),
    }
}

/// `V` rows of `V` comma-separated values, no header.
pub fn matrix_csv(network: &SymmetricNetwork) -> Vec<u8> {
    let v = network.size();
    let mut out = String::new();
    for u in 0..v {
        let row: Vec<String> = (0..v).map(|w| network.get(u, w).to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out.into_bytes()
}

pub fn read_matrix(path: &Path) -> Result<SymmetricNetwork> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in csv_reader(path, false)?.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let row = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| CliError::format(path, format!("{s:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let v = rows.len();
    if v == 0 || rows.iter().any(|r| r.len() != v) {
        return Err(CliError::format(path, "matrix must be square with one row per line"));
    }
    let m = nalgebra::DMatrix::from_fn(v, v, |a, b| rows[a][b]);
    SymmetricNetwork::repaired(m).map_err(|e| CliError::format(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: String,
    pub matrix_path: String,
    pub response: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub node_count: usize,
    pub subjects: Vec<SubjectRecord>,
}

#[derive(Serialize)]
struct ResponseRow<'a> {
    id: &'a str,
    response: f64,
}

/// Manifest, one matrix file per subject and a responses table, written
/// into `out`.
pub fn stage_dataset(out: &StagedDir, data: &NetworkDataset, seed: Option<u64>) -> Result<()> {
    let width = data.len().to_string().len().max(4);
    let mut subjects = Vec::with_capacity(data.len());
    for (i, (w, y)) in data.networks().iter().zip(data.responses()).enumerate() {
        let id = format!("subject_{:0width$}", i + 1);
        let matrix_path = format!("matrices/{id}.csv");
        out.write(&matrix_path, &matrix_csv(w))?;
        subjects.push(SubjectRecord {
            id,
            matrix_path,
            response: *y,
        });
    }
    let rows: Vec<ResponseRow> = subjects
        .iter()
        .map(|s| ResponseRow {
            id: &s.id,
            response: s.response,
        })
        .collect();
    out.write("responses.csv", &commented_csv(provenance(seed, &[]), &rows)?)?;
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        tool_version: TOOL_VERSION.into(),
        seed,
        node_count: data.node_count(),
        subjects,
    };
    out.write(MANIFEST, &to_json(&manifest)?)
}

pub fn load_dataset(dir: &Path) -> Result<NetworkDataset> {
    let manifest_path = dir.join(MANIFEST);
    let text = fs::read_to_string(&manifest_path).map_err(|e| CliError::io(&manifest_path, e))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| CliError::format(&manifest_path, e))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(CliError::format(
            &manifest_path,
            format!("unsupported format version {}", manifest.format_version),
        ));
    }
    let mut ids = HashSet::new();
    let mut networks = Vec::with_capacity(manifest.subjects.len());
    let mut responses = Vec::with_capacity(manifest.subjects.len());
    for s in &manifest.subjects {
        if !ids.insert(s.id.as_str()) {
            return Err(CliError::format(&manifest_path, format!("duplicate subject id {:?}", s.id)));
        }
        let path = dir.join(&s.matrix_path);
        let w = read_matrix(&path)?;
        if w.size() != manifest.node_count {
            return Err(CliError::format(
                &path,
                format!("matrix has {} nodes, manifest declares {}", w.size(), manifest.node_count),
            ));
        }
        networks.push(w);
        responses.push(s.response);
    }
    NetworkDataset::new(networks, responses).map_err(|e| CliError::format(&manifest_path, e))
}

/// One row per signal edge and basis, nodes 1-based.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthRow {
    pub node_a: usize,
    pub node_b: usize,
    pub basis: usize,
}

pub fn truth_csv(truth: &GroundTruth, seed: Option<u64>) -> Result<Vec<u8>> {
    let mut rows = Vec::new();
    for h in 0..SIGNAL_BASES {
        for e in truth.basis_edges(h) {
            rows.push(TruthRow {
                node_a: e.row + 1,
                node_b: e.col + 1,
                basis: h + 1,
            });
        }
    }
    commented_csv(provenance(seed, &[]), &rows)
}

pub fn read_truth(path: &Path, node_count: usize) -> Result<BTreeSet<Edge>> {
    let mut edges = BTreeSet::new();
    for row in csv_reader(path, true)?.deserialize::<TruthRow>() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let (a, b) = (row.node_a, row.node_b);
        if a == 0 || b == 0 || a > node_count || b > node_count || a == b {
            return Err(CliError::format(path, format!("invalid edge ({a}, {b}) for {node_count} nodes")));
        }
        edges.insert(Edge::new(a - 1, b - 1));
    }
    if edges.is_empty() {
        return Err(CliError::format(path, "no truth edges"));
    }
    Ok(edges)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentRecord {
    pub scale: f64,
    pub loading: Vec<f64>,
}

/// Serialized fit. Floats use the shortest representation that parses
/// back to the same bits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub tool_version: String,
    pub seed: u64,
    pub gamma: f64,
    pub rank: usize,
    pub node_count: usize,
    pub intercept: f64,
    pub components: Vec<ComponentRecord>,
    pub final_loss: f64,
    pub converged: bool,
}

impl ModelFile {
    pub fn new(model: &SblModel, seed: u64, gamma: f64, final_loss: f64, converged: bool) -> Self {
        ModelFile {
            format_version: FORMAT_VERSION,
            tool_version: TOOL_VERSION.into(),
            seed,
            gamma,
            rank: model.rank(),
            node_count: model.node_count(),
            intercept: model.intercept(),
            components: model
                .components()
                .iter()
                .map(|c| ComponentRecord {
                    scale: c.scale,
                    loading: c.loading.clone(),
                })
                .collect(),
            final_loss,
            converged,
        }
    }

    pub fn model(&self) -> sbl_core::Result<SblModel> {
        let comps = self
            .components
            .iter()
            .map(|c| Component {
                scale: c.scale,
                loading: c.loading.clone(),
            })
            .collect();
        SblModel::new(self.intercept, comps)
    }

    pub fn load(path: &Path) -> Result<(Self, SblModel)> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|e| CliError::format(path, e))?;
        if file.format_version != FORMAT_VERSION {
            return Err(CliError::format(path, format!("unsupported format version {}", file.format_version)));
        }
        let model = file.model().map_err(|e| CliError::format(path, e))?;
        if model.rank() != file.rank || model.node_count() != file.node_count {
            return Err(CliError::format(path, "rank or node count disagrees with the components"));
        }
        Ok((file, model))
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Usage(format!("json encoding: {e}")))?;
    bytes.push(b'\n');
    Ok(bytes)
}
