use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::types::{DatasetManifest, DomainTag};
use super::DatasetError;

pub const PROMPT_SEPARATOR: &str = ", ";

/// Prompt texts: one shared phrase plus one phrase per domain, keyed by
/// [`DomainTag::prompt_key`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptConfig {
    pub common: String,
    #[serde(default)]
    pub per_domain: BTreeMap<String, String>,
}

impl PromptConfig {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.common.trim().is_empty() {
            return Err(DatasetError::Prompt("common prompt is empty".into()));
        }
        Ok(())
    }

    /// Errors on the first manifest domain without a prompt entry.
    pub fn check_covers(&self, manifest: &DatasetManifest) -> Result<(), DatasetError> {
        match manifest
            .domains
            .iter()
            .find(|d| !self.per_domain.contains_key(&d.prompt_key))
        {
            Some(d) => Err(DatasetError::MissingPrompt(d.name.clone())),
            None => Ok(()),
        }
    }
}

pub fn load_prompt_config(path: impl AsRef<Path>) -> Result<PromptConfig, DatasetError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let cfg: PromptConfig = serde_json::from_str(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Joins the common prompt with the domain's phrase.
pub fn compose_prompt(cfg: &PromptConfig, domain: &DomainTag) -> Result<String, DatasetError> {
    cfg.validate()?;
    let text = cfg
        .per_domain
        .get(&domain.prompt_key)
        .ok_or_else(|| DatasetError::MissingPrompt(domain.name.clone()))?;
    Ok(format!("{}{PROMPT_SEPARATOR}{}", cfg.common, text))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> PromptConfig {
        PromptConfig {
            common: "vineyard rows".into(),
            per_domain: [
                ("day".to_string(), "Daytime shooting".to_string()),
                (
                    "night".to_string(),
                    "Nighttime shooting with artificial lighting".to_string(),
                ),
            ]
            .into_iter()
            .collect(),
        }
    }

    #[test]
    fn day_and_night() {
        assert_eq!(
            compose_prompt(&cfg(), &DomainTag::new("day", "day")).unwrap(),
            "vineyard rows, Daytime shooting"
        );
        assert_eq!(
            compose_prompt(&cfg(), &DomainTag::new("night", "night")).unwrap(),
            "vineyard rows, Nighttime shooting with artificial lighting"
        );
    }

    #[test]
    fn missing_domain() {
        let err = compose_prompt(&cfg(), &DomainTag::new("dusk", "dusk")).unwrap_err();
        assert!(matches!(err, DatasetError::MissingPrompt(ref d) if d == "dusk"));
    }

    #[test]
    fn idempotent() {
        let d = DomainTag::new("day", "day");
        assert_eq!(compose_prompt(&cfg(), &d).unwrap(), compose_prompt(&cfg(), &d).unwrap());
    }

    #[test]
    fn empty_common_rejected() {
        let mut c = cfg();
        c.common = " ".into();
        assert!(compose_prompt(&c, &DomainTag::new("day", "day")).is_err());
    }

    #[test]
    fn coverage_check() {
        let m = DatasetManifest::new(vec![DomainTag::new("day", "day"), DomainTag::new("x", "x")], vec![]);
        assert!(matches!(cfg().check_covers(&m), Err(DatasetError::MissingPrompt(ref d)) if d == "x"));
    }
}
