//! JSON network documents.
//!
//! ```json
//! {
//!   "species": ["X1", "X2", "X3"],
//!   "c_star": [1, 9, 3],
//!   "reactions": [
//!     {"alpha": [1,0,0], "beta": [0,0,1], "speed": "slow", "kappa": 1.7320508075688772},
//!     {"alpha": [1,1,0], "beta": [0,0,2], "speed": "fast", "kappa": 1}
//!   ]
//! }
//! ```
//!
//! Reactions may instead carry `k_fw`/`k_bw`; then `c_star` is optional and
//! detailed balance is solved. An optional `q_fast` array of integer rows
//! fixes the coarse-graining coordinates.

use serde::{Deserialize, Serialize};

use super::{verify_detailed_balance, Reaction, ReactionNetwork, Speed};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    species: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c_star: Option<Vec<f64>>,
    reactions: Vec<ReactionDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q_fast: Option<Vec<Vec<i64>>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ReactionDoc {
    alpha: Vec<u32>,
    beta: Vec<u32>,
    speed: Speed,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k_fw: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k_bw: Option<f64>,
}

enum Convention {
    Symmetric,
    Raw,
}

pub fn parse_network(text: &str) -> Result<ReactionNetwork> {
    let doc: NetworkDoc = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    let n = doc.species.len();
    if n == 0 {
        return Err(Error::Format("network needs at least one species".into()));
    }

    let mut convention = None;
    for (r, rx) in doc.reactions.iter().enumerate() {
        let this = match (rx.kappa, rx.k_fw, rx.k_bw) {
            (Some(_), None, None) => Convention::Symmetric,
            (None, Some(_), Some(_)) => Convention::Raw,
            _ => {
                return Err(Error::Format(format!(
                    "reaction {r}: give either kappa or both k_fw and k_bw"
                )))
            }
        };
        match (&convention, &this) {
            (None, _) => convention = Some(this),
            (Some(Convention::Symmetric), Convention::Raw) | (Some(Convention::Raw), Convention::Symmetric) => {
                return Err(Error::Format("mixed rate conventions in one document".into()))
            }
            _ => {}
        }
    }

    let net = match convention {
        Some(Convention::Raw) => {
            let alpha: Vec<Vec<u32>> = doc.reactions.iter().map(|r| r.alpha.clone()).collect();
            let beta: Vec<Vec<u32>> = doc.reactions.iter().map(|r| r.beta.clone()).collect();
            let k_fw: Vec<f64> = doc.reactions.iter().map(|r| r.k_fw.unwrap_or(f64::NAN)).collect();
            let k_bw: Vec<f64> = doc.reactions.iter().map(|r| r.k_bw.unwrap_or(f64::NAN)).collect();
            for (r, (a, b)) in alpha.iter().zip(&beta).enumerate() {
                if a.len() != n || b.len() != n {
                    return Err(Error::Dimension { expected: n, got: a.len().min(b.len()) });
                }
                if a == b {
                    return Err(Error::NullStoichiometricVector(r));
                }
            }
            let (solved, _) = verify_detailed_balance(n, &alpha, &beta, &k_fw, &k_bw)?;
            let c_star = match doc.c_star {
                Some(cs) => {
                    check_given_equilibrium(&cs, &alpha, &beta, &k_fw, &k_bw)?;
                    cs
                }
                None => solved,
            };
            let reactions = doc
                .reactions
                .iter()
                .enumerate()
                .map(|(r, rx)| {
                    let la = log_mono(&c_star, &rx.alpha);
                    let lb = log_mono(&c_star, &rx.beta);
                    Reaction::new(rx.alpha.clone(), rx.beta.clone(), rx.speed, k_fw[r] * (0.5 * (la - lb)).exp())
                })
                .collect();
            ReactionNetwork::new(doc.species, c_star, reactions)?
        }
        _ => {
            let c_star = doc
                .c_star
                .ok_or_else(|| Error::Format("c_star is required when rates are given as kappa".into()))?;
            let reactions = doc
                .reactions
                .into_iter()
                .map(|rx| Reaction::new(rx.alpha, rx.beta, rx.speed, rx.kappa.unwrap_or(f64::NAN)))
                .collect();
            ReactionNetwork::new(doc.species, c_star, reactions)?
        }
    };
    match doc.q_fast {
        Some(rows) => net.with_coarse_graining(rows),
        None => Ok(net),
    }
}

fn log_mono(c: &[f64], a: &[u32]) -> f64 {
    c.iter().zip(a).map(|(x, &k)| k as f64 * x.ln()).sum()
}

fn check_given_equilibrium(
    c_star: &[f64],
    alpha: &[Vec<u32>],
    beta: &[Vec<u32>],
    k_fw: &[f64],
    k_bw: &[f64],
) -> Result<()> {
    if c_star.iter().any(|&c| !(c.is_finite() && c > 0.0)) {
        return Err(Error::Invalid("c_star must be finite and positive".into()));
    }
    for r in 0..alpha.len() {
        let lhs = k_fw[r].ln() + log_mono(c_star, &alpha[r]);
        let rhs = k_bw[r].ln() + log_mono(c_star, &beta[r]);
        let residual = (lhs - rhs).abs();
        if residual > 1e-10 * (1.0 + lhs.abs().max(rhs.abs())) {
            return Err(Error::NoDetailedBalance { residual });
        }
    }
    Ok(())
}

/// Serialize in symmetric form.
pub fn network_to_json(net: &ReactionNetwork) -> String {
    let doc = NetworkDoc {
        name: None,
        species: net.species().to_vec(),
        c_star: Some(net.c_star().to_vec()),
        reactions: net
            .reactions()
            .iter()
            .map(|r| ReactionDoc {
                alpha: r.alpha.clone(),
                beta: r.beta.clone(),
                speed: r.speed,
                kappa: Some(r.kappa),
                k_fw: None,
                k_bw: None,
            })
            .collect(),
        q_fast: net
            .has_custom_coarse_graining()
            .then(|| net.coarse_graining_rows().to_vec()),
    };
    serde_json::to_string_pretty(&doc).expect("network document serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    const THREE: &str = r#"{
        "species": ["X1", "X2", "X3"],
        "c_star": [1, 9, 3],
        "reactions": [
            {"alpha": [1,0,0], "beta": [0,0,1], "speed": "slow", "kappa": 1.7320508075688772},
            {"alpha": [1,1,0], "beta": [0,0,2], "speed": "fast", "kappa": 1}
        ]
    }"#;

    #[test]
    fn parses_symmetric_form() {
        let net = parse_network(THREE).unwrap();
        assert_eq!(net.num_species(), 3);
        assert_eq!(net.num_reactions(), 2);
        assert_eq!(net.structure().q, vec![vec![1, 1, 1]]);
    }

    #[test]
    fn parses_raw_rates() {
        let text = r#"{"species": ["X1","X2","X3"], "reactions": [
            {"alpha": [1,0,0], "beta": [0,0,1], "speed": "slow", "k_fw": 3, "k_bw": 1},
            {"alpha": [1,1,0], "beta": [0,0,2], "speed": "fast", "k_fw": 1, "k_bw": 1}]}"#;
        let net = parse_network(text).unwrap();
        let cs = net.c_star();
        assert!((cs[1] / cs[0] - 9.0).abs() < 1e-10);
        let with_cs = text.replace("\"reactions\"", "\"c_star\": [1, 9, 3], \"reactions\"");
        let net = parse_network(&with_cs).unwrap();
        assert_eq!(net.c_star(), &[1.0, 9.0, 3.0]);
        assert!((net.kappa()[0] - 3f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn rejects_mixed_conventions() {
        let text = r#"{"species": ["A","B"], "c_star": [1,1], "reactions": [
            {"alpha": [1,0], "beta": [0,1], "speed": "slow", "kappa": 1},
            {"alpha": [2,0], "beta": [0,2], "speed": "fast", "k_fw": 1, "k_bw": 1}]}"#;
        assert!(matches!(parse_network(text), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(parse_network("not json").is_err());
        let zero_rate = THREE.replace("\"kappa\": 1}", "\"kappa\": 0}");
        assert!(matches!(parse_network(&zero_rate), Err(Error::NonpositiveRate(1))));
        let null = r#"{"species": ["A","B"], "c_star": [1,1], "reactions": [
            {"alpha": [1,0], "beta": [1,0], "speed": "slow", "kappa": 1}]}"#;
        assert!(parse_network(null).unwrap_err().to_string().contains("null stoichiometric vector"));
    }

    #[test]
    fn empty_reaction_list() {
        let net = parse_network(r#"{"species": ["A","B","C"], "c_star": [1,2,3], "reactions": []}"#).unwrap();
        assert_eq!(net.structure().m(), 3);
        assert_eq!(net.structure().dim_gamma(), 0);
    }

    #[test]
    fn round_trip() {
        let net = fixtures::five_species(0.5);
        let back = parse_network(&network_to_json(&net)).unwrap();
        assert_eq!(back.c_star(), net.c_star());
        assert_eq!(back.coarse_graining_rows(), net.coarse_graining_rows());
        assert_eq!(back.kappa(), net.kappa());
    }
}
