//! A checked, runnable model: definitions, rate configuration and initial system.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::bikeshare::{StationRepository, UserRepository};
use crate::error::{ConfigError, ModelError};
use crate::interface::InterfaceDef;
use crate::knowledge::{KnowledgeState, Repository, TupleSpace};
use crate::rates::RateConfig;
use crate::semantics::{Context, Semantics};
use crate::syntax::{check_model, parse_model, ModelFile, RepositoryDecl, Severity};
use crate::term::{Component, DefinitionsTable, System};

/// Repository kinds a model file may instantiate.
pub const REPOSITORY_KINDS: &[&str] = &["tuplespace", "bikeshare_user", "bikeshare_station"];

fn make_repository(decl: &RepositoryDecl) -> Result<Arc<dyn Repository>, ModelError> {
    let err = |message: String| ModelError::Repository {
        name: decl.name.clone(),
        message,
    };
    Ok(match decl.kind.as_str() {
        "tuplespace" => {
            if let Some((k, _)) = decl.params.first() {
                return Err(err(format!("unknown parameter `{k}`")));
            }
            TupleSpace::shared()
        }
        "bikeshare_user" => Arc::new(UserRepository::from_decl(decl).map_err(err)?),
        "bikeshare_station" => {
            if let Some((k, _)) = decl.params.first() {
                return Err(err(format!("unknown parameter `{k}`")));
            }
            Arc::new(StationRepository)
        }
        other => {
            return Err(err(format!(
                "unknown repository kind `{other}` (known: {})",
                REPOSITORY_KINDS.join(", ")
            )))
        }
    })
}

/// Instantiates the components of a checked model file.
pub fn build_system(file: &ModelFile) -> Result<System, ModelError> {
    let interfaces: BTreeMap<&str, Arc<InterfaceDef>> = file
        .interfaces
        .iter()
        .map(|i| (i.def.name.as_str(), Arc::new(i.def.clone())))
        .collect();
    let mut repositories: BTreeMap<&str, Arc<dyn Repository>> = BTreeMap::new();
    for r in &file.repositories {
        repositories.insert(r.name.as_str(), make_repository(r)?);
    }
    let default_interface = Arc::new(InterfaceDef::empty());
    let default_repository = TupleSpace::shared();

    let mut comps = Vec::new();
    for c in &file.components {
        let interface = match &c.interface {
            Some(i) => interfaces.get(i.as_str()).cloned().ok_or_else(|| unknown(c.pos, "interface", i))?,
            None => default_interface.clone(),
        };
        let repository = match &c.repository {
            Some(r) => repositories.get(r.as_str()).cloned().ok_or_else(|| unknown(c.pos, "repository", r))?,
            None => default_repository.clone(),
        };
        let knowledge = KnowledgeState::from_items(c.knowledge.iter().cloned());
        for n in 0..c.replicate {
            let name = if c.replicate == 1 {
                c.name.clone()
            } else {
                format!("{}_{n}", c.name)
            };
            comps.push(Component::new(
                name,
                interface.clone(),
                repository.clone(),
                knowledge.clone(),
                c.process.clone(),
            ));
        }
    }
    if comps.is_empty() {
        return Err(ModelError::Check(vec![crate::syntax::Diagnostic {
            line: 1,
            column: 1,
            severity: Severity::Error,
            message: "model has no components".into(),
        }]));
    }
    Ok(System::new(comps))
}

fn unknown(pos: crate::syntax::SourcePos, what: &str, name: &str) -> ModelError {
    ModelError::Check(vec![crate::syntax::Diagnostic {
        line: pos.line,
        column: pos.column,
        severity: Severity::Error,
        message: format!("unknown {what} `{name}`"),
    }])
}

#[derive(Clone, Debug)]
pub struct Model {
    pub file: ModelFile,
    pub defs: Arc<DefinitionsTable>,
    pub rates: Arc<RateConfig>,
    pub initial: System,
}

impl Model {
    /// Parses, checks and instantiates a model. `rates` overrides any
    /// `config` declaration; without either, every action has the default rate.
    pub fn from_source(text: &str, rates: Option<RateConfig>) -> Result<Model, ModelError> {
        let file = parse_model(text)?;
        Self::from_file(file, rates)
    }

    pub fn from_file(file: ModelFile, rates: Option<RateConfig>) -> Result<Model, ModelError> {
        let diags: Vec<_> = check_model(&file)
            .into_iter()
            .filter(|d| d.severity == Severity::Error)
            .collect();
        if !diags.is_empty() {
            return Err(ModelError::Check(diags));
        }
        let defs: DefinitionsTable = file.definitions.iter().map(|d| d.def.clone()).collect();
        let initial = build_system(&file)?;
        Ok(Model {
            file,
            defs: Arc::new(defs),
            rates: Arc::new(rates.unwrap_or_default()),
            initial,
        })
    }

    /// Loads a model file. The rate configuration is `config` when given,
    /// else the file's `config` declaration resolved against its directory.
    pub fn load(path: impl AsRef<Path>, config: Option<&Path>) -> Result<Model, LoadError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| LoadError::Io(path.to_path_buf(), e))?;
        let file = parse_model(&text).map_err(|e| LoadError::Model(e.into()))?;
        let config_path: Option<PathBuf> = match (config, &file.config) {
            (Some(c), _) => Some(c.to_path_buf()),
            (None, Some(c)) => Some(path.parent().unwrap_or(Path::new(".")).join(c)),
            (None, None) => None,
        };
        let rates = match config_path {
            Some(p) => Some(RateConfig::from_file(&p).map_err(|e| LoadError::Model(ModelError::Config(e)))?),
            None => None,
        };
        Model::from_file(file, rates).map_err(LoadError::Model)
    }

    pub fn context(&self, semantics: Semantics) -> Context {
        Context::new(self.defs.clone(), self.rates.clone(), semantics)
    }

    pub fn with_rates(&self, rates: RateConfig) -> Model {
        Model {
            rates: Arc::new(rates),
            ..self.clone()
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error(transparent)]
    Model(ModelError),
}

impl From<ConfigError> for LoadError {
    fn from(e: ConfigError) -> Self {
        LoadError::Model(ModelError::Config(e))
    }
}
