use std::path::{Path, PathBuf};
use std::sync::Arc;

use lexflow_core::clock::{self, Clock};
use lexflow_core::engine::{Engine, EngineError};
use lexflow_core::memory::SharedMemory;
use lexflow_core::resources::{ResourceError, Resources};
use lexflow_core::store::{LkgStore, StoreError};
use lexflow_core::workers::{ServiceRegistry, StoreClient, WorkerContext};
use thiserror::Error;

pub const STORE_DIR: &str = "store";
pub const ENGINE_DIR: &str = "engine";

#[derive(Debug, Error)]
pub enum PlatformError {
    #[error(transparent)]
    Resources(#[from] ResourceError),
    #[error("store: {0}")]
    Store(#[from] StoreError),
    #[error("engine: {0}")]
    Engine(#[from] EngineError),
}

/// Store, engine, shared memory and services of one server process.
#[derive(Clone)]
pub struct Platform {
    pub store: Arc<LkgStore>,
    pub engine: Arc<Engine>,
    pub memory: Arc<SharedMemory>,
    pub resources: Arc<Resources>,
    pub services: Arc<ServiceRegistry>,
}

impl std::fmt::Debug for Platform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Platform").finish_non_exhaustive()
    }
}

impl Platform {
    /// Persistent platform under `data_dir`, or in memory when it is `None`.
    /// Shipped workflows are deployed unless already current.
    pub fn open(data_dir: Option<&Path>, resources: Resources) -> Result<Self, PlatformError> {
        Self::open_with_clock(data_dir, resources, clock::system())
    }

    pub fn open_with_clock(
        data_dir: Option<&Path>,
        resources: Resources,
        clock: Arc<dyn Clock>,
    ) -> Result<Self, PlatformError> {
        let (store, engine) = match data_dir {
            Some(d) => (
                LkgStore::open_with_clock(&d.join(STORE_DIR), clock.clone())?,
                Engine::open(&d.join(ENGINE_DIR), clock.clone())?,
            ),
            None => (LkgStore::in_memory(), Engine::in_memory(clock.clone())),
        };
        let store = Arc::new(store);
        let resources = Arc::new(resources);
        let services = Arc::new(ServiceRegistry::new(resources.clone(), Some(store.clone() as Arc<dyn StoreClient>)));
        let platform = Platform {
            store,
            engine: Arc::new(engine),
            memory: Arc::new(SharedMemory::new(data_dir, clock)),
            resources,
            services,
        };
        platform.deploy_shipped()?;
        Ok(platform)
    }

    /// Deploys every resource workflow whose latest deployed version differs.
    pub fn deploy_shipped(&self) -> Result<Vec<String>, EngineError> {
        let mut deployed = Vec::new();
        for def in &self.resources.workflows {
            if self.engine.workflow(&def.id).as_ref() != Some(def) {
                deployed.push(self.engine.deploy_workflow(def.clone())?);
            }
        }
        Ok(deployed)
    }

    /// Context for workers running inside this process.
    pub fn worker_context(&self) -> WorkerContext {
        WorkerContext {
            engine: self.engine.clone(),
            memory: self.memory.clone(),
            store: Some(self.store.clone()),
            services: self.services.clone(),
        }
    }
}

/// `--resources-dir` default: `./resources` when present, else empty.
pub fn load_resources(dir: Option<&Path>) -> Result<Resources, ResourceError> {
    match dir {
        Some(d) => Resources::load(d),
        None => {
            let d = PathBuf::from("resources");
            if d.is_dir() {
                Resources::load(&d)
            } else {
                Ok(Resources::default())
            }
        }
    }
}
