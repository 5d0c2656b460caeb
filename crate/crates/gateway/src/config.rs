use serde::{Deserialize, Serialize};

use ruleflex_core::workspace::ProviderDefaults;

use crate::GatewayError;

pub const DEFAULT_CREDENTIAL_ENV: &str = "RULEFLEX_API_KEY";

/// Provider settings as recorded with every run. The credential is held by
/// reference (an environment variable name), so serializing a config can
/// never leak the secret.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub endpoint: String,
    pub model: String,
    pub temperature: f64,
    pub max_response_tokens: u32,
    pub credential_env: String,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig::from_defaults(&ProviderDefaults::default())
    }
}

impl ProviderConfig {
    pub fn from_defaults(d: &ProviderDefaults) -> Self {
        ProviderConfig {
            endpoint: d.endpoint.clone(),
            model: d.model.clone(),
            temperature: d.temperature,
            max_response_tokens: d.max_tokens,
            credential_env: DEFAULT_CREDENTIAL_ENV.to_string(),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::InvalidConfig(format!("temperature {} is outside [0, 2]", self.temperature)));
        }
        if self.max_response_tokens == 0 {
            return Err(GatewayError::InvalidConfig("max_response_tokens must be positive".into()));
        }
        if self.model.trim().is_empty() {
            return Err(GatewayError::InvalidConfig("model name is empty".into()));
        }
        Ok(())
    }

    pub(crate) fn credential(&self) -> Result<String, GatewayError> {
        match std::env::var(&self.credential_env) {
            Ok(v) if !v.trim().is_empty() => Ok(v),
            _ => Err(GatewayError::CredentialMissing(self.credential_env.clone())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_experiment_settings() {
        let c = ProviderConfig::default();
        assert_eq!(c.temperature, 1.0);
        assert_eq!(c.max_response_tokens, 3000);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn out_of_range_values_are_rejected() {
        let mut c = ProviderConfig { temperature: 2.5, ..ProviderConfig::default() };
        assert!(matches!(c.validate(), Err(GatewayError::InvalidConfig(_))));
        c.temperature = 0.0;
        c.max_response_tokens = 0;
        assert!(matches!(c.validate(), Err(GatewayError::InvalidConfig(_))));
    }

    #[test]
    fn serialized_config_names_the_variable_not_the_secret() {
        let c = ProviderConfig { credential_env: "RULEFLEX_TEST_SECRET_CFG".into(), ..ProviderConfig::default() };
        std::env::set_var("RULEFLEX_TEST_SECRET_CFG", "sk-very-secret");
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("RULEFLEX_TEST_SECRET_CFG"));
        assert!(!json.contains("sk-very-secret"));
        assert_eq!(c.credential().unwrap(), "sk-very-secret");
    }
}
