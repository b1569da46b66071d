//! Personas, listings and catalog loading.
//!
//! A catalog bundles the persona roster and the house listings available to
//! auction scenarios. It is immutable after load and safe to share across
//! concurrent runs. Prices are whole currency units (`i64`); no floating
//! point ever touches budget arithmetic.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Whole currency units. Signed because realized profit can go negative
/// when a bidding war pushes the hammer price past the true value.
pub type Money = i64;

/// Dense index into the catalog's persona roster (`0..k`).
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct PersonaId(pub usize);

impl fmt::Display for PersonaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A buyer identity. `prompt_snippet` is injected verbatim into the system
/// message of any agent that adopts this persona.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    pub id: PersonaId,
    pub name: String,
    pub description: String,
    pub prompt_snippet: String,
}

/// An auction item. `starting_price` is public; `true_value` is hidden from
/// agents and only used for ground-truth bookkeeping and metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Listing {
    pub id: String,
    pub name: String,
    pub description: String,
    pub starting_price: Money,
    pub true_value: Money,
    #[serde(default)]
    pub matched_personas: BTreeSet<PersonaId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub personas: Vec<Persona>,
    pub listings: Vec<Listing>,
}

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("failed to read catalog file {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse catalog: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid catalog: {0}")]
    Invalid(String),
    #[error("infeasible scenario request: {0}")]
    Infeasible(String),
}

impl Catalog {
    /// Number of personas, i.e. the dimension of every profiling vector.
    pub fn k(&self) -> usize {
        self.personas.len()
    }

    pub fn persona_name(&self, id: PersonaId) -> &str {
        &self.personas[id.0].name
    }

    pub fn listing(&self, id: &str) -> Option<&Listing> {
        self.listings.iter().find(|l| l.id == id)
    }

    /// Loads and validates a catalog from a JSON file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CatalogError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| CatalogError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let catalog: Catalog = serde_json::from_str(&text)?;
        catalog.validate()?;
        Ok(catalog)
    }

    /// Checks every structural invariant, reporting the first violation.
    pub fn validate(&self) -> Result<(), CatalogError> {
        let invalid = |msg: String| Err(CatalogError::Invalid(msg));
        if self.personas.is_empty() {
            return invalid("no personas".into());
        }
        for (idx, persona) in self.personas.iter().enumerate() {
            if persona.id.0 != idx {
                return invalid(format!(
                    "persona ids must be dense 0..k: index {idx} has id {}",
                    persona.id
                ));
            }
            if persona.name.trim().is_empty() {
                return invalid(format!("persona {idx} has an empty name"));
            }
            if persona.prompt_snippet.trim().is_empty() {
                return invalid(format!("persona {idx} has an empty prompt snippet"));
            }
        }
        if self.listings.is_empty() {
            return invalid("no listings".into());
        }
        let mut ids = BTreeSet::new();
        let mut names = BTreeSet::new();
        for listing in &self.listings {
            if !ids.insert(listing.id.as_str()) {
                return invalid(format!("duplicate listing id {}", listing.id));
            }
            // Names key priority plans and status boards in agent prompts,
            // so they must be unique as well.
            if !names.insert(listing.name.as_str()) {
                return invalid(format!("duplicate listing name {}", listing.name));
            }
            if listing.starting_price <= 0 {
                return invalid(format!(
                    "listing {}: starting_price must be positive",
                    listing.id
                ));
            }
            if listing.true_value < listing.starting_price {
                return invalid(format!(
                    "listing {}: true_value {} < starting_price {}",
                    listing.id, listing.true_value, listing.starting_price
                ));
            }
            for pid in &listing.matched_personas {
                if pid.0 >= self.personas.len() {
                    return invalid(format!(
                        "listing {}: matched persona {} out of range (k={})",
                        listing.id,
                        pid,
                        self.personas.len()
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Picks a deterministic auction item list: exactly `count` listings matched
/// to each requested persona plus `filler` listings matching none of the
/// requested personas. A listing that matches several requested personas is
/// consumed by exactly one of them. The returned order is the presentation
/// order of the auction.
pub fn select_scenario_items(
    catalog: &Catalog,
    per_persona_matches: &[(PersonaId, usize)],
    filler: usize,
    seed: u64,
) -> Result<Vec<Listing>, CatalogError> {
    for (pid, _) in per_persona_matches {
        if pid.0 >= catalog.k() {
            return Err(CatalogError::Invalid(format!(
                "requested persona {pid} out of range (k={})",
                catalog.k()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let requested: BTreeSet<PersonaId> = per_persona_matches.iter().map(|(p, _)| *p).collect();

    let mut requests: Vec<(PersonaId, usize)> = per_persona_matches.to_vec();
    requests.sort_by_key(|(p, _)| *p);

    let mut taken: BTreeSet<&str> = BTreeSet::new();
    let mut chosen: Vec<Listing> = Vec::new();
    for (pid, count) in &requests {
        let mut pool: Vec<&Listing> = catalog
            .listings
            .iter()
            .filter(|l| l.matched_personas.contains(pid) && !taken.contains(l.id.as_str()))
            .collect();
        if pool.len() < *count {
            return Err(CatalogError::Infeasible(format!(
                "persona {pid} needs {count} matched listings, only {} available",
                pool.len()
            )));
        }
        pool.shuffle(&mut rng);
        for listing in pool.into_iter().take(*count) {
            taken.insert(&listing.id);
            chosen.push(listing.clone());
        }
    }

    let mut filler_pool: Vec<&Listing> = catalog
        .listings
        .iter()
        .filter(|l| {
            !taken.contains(l.id.as_str()) && l.matched_personas.is_disjoint(&requested)
        })
        .collect();
    if filler_pool.len() < filler {
        return Err(CatalogError::Infeasible(format!(
            "need {filler} filler listings, only {} available",
            filler_pool.len()
        )));
    }
    filler_pool.shuffle(&mut rng);
    chosen.extend(filler_pool.into_iter().take(filler).cloned());

    chosen.shuffle(&mut rng);
    Ok(chosen)
}
