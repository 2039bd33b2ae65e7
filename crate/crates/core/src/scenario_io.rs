//! Reading and writing `.eth` documents.
//!
//! Every document is UTF-8 TOML with a `[meta]` table carrying `kind` and
//! `format_version`. Scenarios, profiles, profile indexes, corpora and weight
//! overlays have typed schemas; reports are written through
//! [`to_document`] and read back with [`from_document`]. The grammar is
//! documented in `docs/SCHEMA.md`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ensure_valid, ActionDef, BaselineWeights, ContextDistribution, Dictum, ObjectiveWeights,
    Prescript, PrescriptConditional, ScenarioModel, UtilityTensor, DEFAULT_U_MAX,
};
use crate::profiles::{EthicalProfileMatrix, ProfileCollection};

pub const FORMAT_VERSION: i64 = 1;
pub const FILE_EXTENSION: &str = "eth";

pub mod kind {
    pub const SCENARIO: &str = "scenario";
    pub const WEIGHTS: &str = "weights";
    pub const PROFILE: &str = "profile";
    pub const PROFILE_INDEX: &str = "profile_index";
    pub const CORPUS: &str = "corpus";
    pub const DECISION: &str = "decision";
    pub const SAMPLE: &str = "sample";
    pub const VERIFIER: &str = "verifier";
    pub const CONVERGENCE: &str = "convergence";
    pub const VALIDATION: &str = "validation";
    pub const RETRIEVAL: &str = "retrieval";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Meta {
    kind: String,
    format_version: i64,
}

impl Meta {
    fn new(kind: &str) -> Self {
        Self {
            kind: kind.to_owned(),
            format_version: FORMAT_VERSION,
        }
    }
}

/// Parses TOML into a table and checks the `[meta]` header without
/// interpreting the rest of the document.
fn read_header(text: &str, expected_kind: &str) -> Result<toml::Table> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Syntax(e.to_string().trim_end().to_owned()))?;
    if table.is_empty() {
        return Err(Error::Syntax("empty document".into()));
    }
    let meta = table.get("meta").ok_or_else(|| Error::Schema {
        section: "meta".into(),
        message: "missing [meta] table".into(),
    })?;
    let meta = Meta::deserialize(meta.clone()).map_err(|e| Error::Schema {
        section: "meta".into(),
        message: e.to_string().trim_end().to_owned(),
    })?;
    if meta.format_version != FORMAT_VERSION {
        return Err(Error::FormatVersion {
            found: meta.format_version,
            supported: FORMAT_VERSION,
        });
    }
    if meta.kind != expected_kind {
        return Err(Error::Schema {
            section: "meta".into(),
            message: format!("expected kind `{expected_kind}`, found `{}`", meta.kind),
        });
    }
    Ok(table)
}

/// Deserializes a typed document from text so schema errors keep their
/// line and column.
fn typed<T: DeserializeOwned>(text: &str, kind: &str) -> Result<T> {
    read_header(text, kind)?;
    toml::from_str(text).map_err(|e| Error::Schema {
        section: kind.to_owned(),
        message: e.to_string().trim_end().to_owned(),
    })
}

fn render<T: Serialize>(doc: &T) -> Result<String> {
    toml::to_string(doc).map_err(|e| Error::Schema {
        section: "serialize".into(),
        message: e.to_string(),
    })
}

/// Serializes any report under a `[meta]` header of the given kind.
pub fn to_document<T: Serialize>(kind: &str, body: &T) -> Result<String> {
    let mut table = toml::Table::try_from(body).map_err(|e| Error::Schema {
        section: kind.to_owned(),
        message: e.to_string(),
    })?;
    table.insert(
        "meta".into(),
        toml::Value::try_from(Meta::new(kind)).expect("meta serializes"),
    );
    render(&table)
}

/// Inverse of [`to_document`].
pub fn from_document<T: DeserializeOwned>(text: &str, kind: &str) -> Result<T> {
    let mut table = read_header(text, kind)?;
    table.remove("meta");
    T::deserialize(toml::Value::Table(table)).map_err(|e| Error::Schema {
        section: kind.to_owned(),
        message: e.to_string().trim_end().to_owned(),
    })
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn with_path(path: &Path, err: Error) -> Error {
    match err {
        Error::Syntax(m) => Error::Syntax(format!("{}: {m}", path.display())),
        Error::Schema { section, message } => Error::Schema {
            section,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    }
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

fn default_u_max() -> f64 {
    DEFAULT_U_MAX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioHeader {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default = "default_u_max")]
    u_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    meta: Meta,
    scenario: ScenarioHeader,
    dicta: Vec<Dictum>,
    prescripts: Vec<Prescript>,
    actions: Vec<ActionDef>,
    context: ContextDistribution,
    conditional: PrescriptConditional,
    utilities: UtilityTensor,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    objective_weights: Option<ObjectiveWeights>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    baseline_weights: Option<BaselineWeights>,
}

impl From<ScenarioDoc> for ScenarioModel {
    fn from(doc: ScenarioDoc) -> Self {
        let mut model = ScenarioModel {
            name: doc.scenario.name,
            description: doc.scenario.description,
            u_max: doc.scenario.u_max,
            dicta: doc.dicta,
            prescripts: doc.prescripts,
            actions: doc.actions,
            context: doc.context,
            conditional: doc.conditional,
            utilities: doc.utilities,
            objective_weights: doc.objective_weights,
            baseline_weights: doc.baseline_weights,
        };
        model.canonicalize();
        model
    }
}

/// Parses a scenario without validating it.
pub fn parse_scenario_unchecked(text: &str) -> Result<ScenarioModel> {
    typed::<ScenarioDoc>(text, kind::SCENARIO).map(ScenarioModel::from)
}

/// Parses and validates a scenario.
pub fn parse_scenario(text: &str) -> Result<ScenarioModel> {
    let model = parse_scenario_unchecked(text)?;
    ensure_valid(&model)?;
    Ok(model)
}

/// Canonical text form: sorted id lists and sorted map keys.
pub fn serialize_scenario(model: &ScenarioModel) -> Result<String> {
    let mut m = model.clone();
    m.canonicalize();
    render(&ScenarioDoc {
        meta: Meta::new(kind::SCENARIO),
        scenario: ScenarioHeader {
            name: m.name,
            description: m.description,
            u_max: m.u_max,
        },
        dicta: m.dicta,
        prescripts: m.prescripts,
        actions: m.actions,
        context: m.context,
        conditional: m.conditional,
        utilities: m.utilities,
        objective_weights: m.objective_weights,
        baseline_weights: m.baseline_weights,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub path: PathBuf,
    pub parsed: ScenarioModel,
    pub format_version: i64,
}

/// Reads and validates a scenario file.
pub fn read_scenario(path: impl AsRef<Path>) -> Result<ScenarioFile> {
    let path = path.as_ref();
    let parsed = parse_scenario(&read_file(path)?).map_err(|e| with_path(path, e))?;
    Ok(ScenarioFile {
        path: path.to_path_buf(),
        parsed,
        format_version: FORMAT_VERSION,
    })
}

/// Reads a scenario file without validating it.
pub fn read_scenario_unchecked(path: impl AsRef<Path>) -> Result<ScenarioModel> {
    let path = path.as_ref();
    parse_scenario_unchecked(&read_file(path)?).map_err(|e| with_path(path, e))
}

// ---------------------------------------------------------------------------
// Weight overlays
// ---------------------------------------------------------------------------

/// Replacement objective and/or baseline weights for a scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsOverlay {
    #[serde(default)]
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective_weights: Option<ObjectiveWeights>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline_weights: Option<BaselineWeights>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightsDoc {
    #[serde(rename = "meta")]
    _meta: Meta,
    #[serde(default)]
    description: String,
    #[serde(default)]
    objective_weights: Option<ObjectiveWeights>,
    #[serde(default)]
    baseline_weights: Option<BaselineWeights>,
}

pub fn parse_weights(text: &str) -> Result<WeightsOverlay> {
    let doc = typed::<WeightsDoc>(text, kind::WEIGHTS)?;
    Ok(WeightsOverlay {
        description: doc.description,
        objective_weights: doc.objective_weights,
        baseline_weights: doc.baseline_weights,
    })
}

pub fn serialize_weights(overlay: &WeightsOverlay) -> Result<String> {
    to_document(kind::WEIGHTS, overlay)
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<WeightsOverlay> {
    let path = path.as_ref();
    parse_weights(&read_file(path)?).map_err(|e| with_path(path, e))
}

/// Replaces the weight tables present in the overlay and revalidates.
pub fn apply_weights(model: &ScenarioModel, overlay: &WeightsOverlay) -> Result<ScenarioModel> {
    let mut out = model.clone();
    if let Some(w) = &overlay.objective_weights {
        out.objective_weights = Some(w.clone());
    }
    if let Some(w) = &overlay.baseline_weights {
        out.baseline_weights = Some(w.clone());
    }
    ensure_valid(&out)?;
    Ok(out)
}

// ---------------------------------------------------------------------------
// Profiles
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileBody {
    id: String,
    prescripts: Vec<String>,
    dicta: Vec<String>,
    /// Row-major, one row per prescript.
    entries: Vec<f64>,
    normalized: bool,
}

impl ProfileBody {
    fn new(id: &str, m: &EthicalProfileMatrix) -> Self {
        Self {
            id: id.to_owned(),
            prescripts: m.prescript_ids.clone(),
            dicta: m.dictum_ids.clone(),
            entries: m.entries.clone(),
            normalized: m.normalized,
        }
    }

    fn into_matrix(self) -> Result<(String, EthicalProfileMatrix)> {
        let m = EthicalProfileMatrix::new(self.prescripts, self.dicta, self.entries, self.normalized)?;
        Ok((self.id, m))
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProfileDoc {
    meta: Meta,
    profile: ProfileBody,
}

pub fn parse_profile(text: &str) -> Result<(String, EthicalProfileMatrix)> {
    typed::<ProfileDoc>(text, kind::PROFILE)?.profile.into_matrix()
}

pub fn serialize_profile(id: &str, m: &EthicalProfileMatrix) -> Result<String> {
    render(&ProfileDoc {
        meta: Meta::new(kind::PROFILE),
        profile: ProfileBody::new(id, m),
    })
}

pub fn read_profile(path: impl AsRef<Path>) -> Result<(String, EthicalProfileMatrix)> {
    let path = path.as_ref();
    parse_profile(&read_file(path)?).map_err(|e| with_path(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexEntry {
    cluster: String,
    medoid: bool,
    prescripts: Vec<String>,
    dicta: Vec<String>,
    entries: Vec<f64>,
    normalized: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexDoc {
    meta: Meta,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    cost_history: Vec<f64>,
    profiles: BTreeMap<String, IndexEntry>,
}

/// Self-contained clustered collection: every profile is stored inline with
/// its cluster label and medoid flag.
pub fn serialize_index(collection: &ProfileCollection) -> Result<String> {
    let mut profiles = BTreeMap::new();
    for (cluster, members) in &collection.clusters {
        for id in members {
            let m = &collection.profiles[id];
            profiles.insert(
                id.clone(),
                IndexEntry {
                    cluster: cluster.clone(),
                    medoid: collection.medoids.get(cluster) == Some(id),
                    prescripts: m.prescript_ids.clone(),
                    dicta: m.dictum_ids.clone(),
                    entries: m.entries.clone(),
                    normalized: m.normalized,
                },
            );
        }
    }
    render(&IndexDoc {
        meta: Meta::new(kind::PROFILE_INDEX),
        cost_history: collection.cost_history.clone(),
        profiles,
    })
}

pub fn parse_index(text: &str) -> Result<ProfileCollection> {
    let doc = typed::<IndexDoc>(text, kind::PROFILE_INDEX)?;
    let mut profiles = BTreeMap::new();
    let mut clusters: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut medoids = BTreeMap::new();
    for (id, e) in doc.profiles {
        clusters.entry(e.cluster.clone()).or_default().push(id.clone());
        if e.medoid {
            if let Some(prev) = medoids.insert(e.cluster.clone(), id.clone()) {
                return Err(Error::Schema {
                    section: format!("profiles.{id}"),
                    message: format!("cluster `{}` already has medoid `{prev}`", e.cluster),
                });
            }
        }
        let m = EthicalProfileMatrix::new(e.prescripts, e.dicta, e.entries, e.normalized)?;
        profiles.insert(id, m);
    }
    let mut collection = ProfileCollection::from_parts(profiles, clusters, medoids)?;
    collection.cost_history = doc.cost_history;
    Ok(collection)
}

pub fn read_index(path: impl AsRef<Path>) -> Result<ProfileCollection> {
    let path = path.as_ref();
    parse_index(&read_file(path)?).map_err(|e| with_path(path, e))
}

// ---------------------------------------------------------------------------
// Reference corpora
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    /// Scenario path, relative to the corpus file.
    pub scenario: String,
    pub action: String,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusDoc {
    meta: Meta,
    records: Vec<CorpusRecord>,
}

pub fn parse_corpus(text: &str) -> Result<Vec<CorpusRecord>> {
    typed::<CorpusDoc>(text, kind::CORPUS).map(|d| d.records)
}

pub fn serialize_corpus(records: &[CorpusRecord]) -> Result<String> {
    render(&CorpusDoc {
        meta: Meta::new(kind::CORPUS),
        records: records.to_vec(),
    })
}

/// Loads a corpus and every scenario it references.
pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<(ScenarioModel, String)>> {
    let path = path.as_ref();
    let records = parse_corpus(&read_file(path)?).map_err(|e| with_path(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    records
        .into_iter()
        .map(|r| Ok((read_scenario(base.join(&r.scenario))?.parsed, r.action)))
        .collect()
}

// ---------------------------------------------------------------------------
// Bundled fixtures
// ---------------------------------------------------------------------------

const SCENARIO_SOURCES: [(&str, &str); 4] = [
    ("scenario1", include_str!("../scenarios/scenario1.eth")),
    ("scenario2", include_str!("../scenarios/scenario2.eth")),
    ("scenario3", include_str!("../scenarios/scenario3.eth")),
    ("scenario4", include_str!("../scenarios/scenario4.eth")),
];

const WEIGHT_SOURCES: [(&str, &str); 2] = [
    (
        "scenario4-child-priority",
        include_str!("../scenarios/scenario4-child-priority.eth"),
    ),
    (
        "scenario4-role-priority",
        include_str!("../scenarios/scenario4-role-priority.eth"),
    ),
];

/// Source text of a bundled fixture by name, e.g. `scenario1` or
/// `scenario4-child-priority`.
pub fn bundled_source(name: &str) -> Option<&'static str> {
    SCENARIO_SOURCES
        .iter()
        .chain(WEIGHT_SOURCES.iter())
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
}

/// The four trolley scenarios, in order.
pub fn bundled_scenarios() -> Vec<ScenarioModel> {
    SCENARIO_SOURCES
        .iter()
        .map(|(name, text)| {
            parse_scenario(text).unwrap_or_else(|e| panic!("bundled {name} is invalid: {e}"))
        })
        .collect()
}

/// The two alternative Scenario 4 weight configurations, by name.
pub fn bundled_weights() -> Vec<(&'static str, WeightsOverlay)> {
    WEIGHT_SOURCES
        .iter()
        .map(|(name, text)| {
            let w = parse_weights(text).unwrap_or_else(|e| panic!("bundled {name} is invalid: {e}"));
            (*name, w)
        })
        .collect()
}
