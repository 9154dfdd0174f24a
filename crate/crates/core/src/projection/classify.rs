use serde::{Deserialize, Serialize};

use super::Projection;
use crate::error::{Error, Result};
use crate::network::ReactionNetwork;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReactionClass {
    /// `P nu_j = 0`: invisible to the projected process.
    Inactive,
    /// Propensity depends only on projected coordinates:
    /// `rate * prod (s_row)_(alpha)` over `(row, alpha)` terms.
    ClosedForm {
        rate: f64,
        terms: Vec<(usize, u32)>,
    },
    Regressed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub classes: Vec<ReactionClass>,
    pub nu_bar: Vec<Vec<i64>>,
}

impl Classification {
    /// Indices of the regressed reactions.
    pub fn j_mp(&self) -> Vec<usize> {
        self.classes
            .iter()
            .enumerate()
            .filter(|(_, c)| matches!(c, ReactionClass::Regressed))
            .map(|(j, _)| j)
            .collect()
    }
}

/// Splits reactions into inactive, closed-form and regressed ones. With
/// `force_regression` every reaction with a nonzero projected jump is
/// regressed.
pub fn classify_reactions(
    net: &ReactionNetwork,
    proj: &Projection,
    force_regression: bool,
) -> Result<Classification> {
    if proj.full_dims() != net.species_count() {
        return Err(Error::InvalidArgument(format!(
            "projection acts on {} species, network has {}",
            proj.full_dims(),
            net.species_count()
        )));
    }
    let canonical = proj.canonical_species();
    let mut classes = Vec::with_capacity(net.reaction_count());
    let mut nu_bar = Vec::with_capacity(net.reaction_count());
    for j in 0..net.reaction_count() {
        let nb = proj.apply(net.stoichiometry(j));
        let class = if nb.iter().all(|&v| v == 0) {
            ReactionClass::Inactive
        } else if force_regression {
            ReactionClass::Regressed
        } else {
            match &canonical {
                Some(species) => {
                    let terms: Option<Vec<(usize, u32)>> = net
                        .reactant_terms(j)
                        .iter()
                        .map(|&(i, c)| species.iter().position(|&s| s == i).map(|r| (r, c)))
                        .collect();
                    match terms {
                        Some(terms) => ReactionClass::ClosedForm {
                            rate: net.rate(j),
                            terms,
                        },
                        None => ReactionClass::Regressed,
                    }
                }
                None => ReactionClass::Regressed,
            }
        };
        classes.push(class);
        nu_bar.push(nb);
    }
    Ok(Classification { classes, nu_bar })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{goutsias, michaelis_menten};

    #[test]
    fn michaelis_menten_onto_complex() {
        let p = michaelis_menten();
        let proj = Projection::canonical(4, &[2]).unwrap();
        let c = classify_reactions(&p.network, &proj, false).unwrap();
        assert_eq!(c.nu_bar, vec![vec![1], vec![-1], vec![-1]]);
        assert_eq!(c.j_mp(), vec![0]);
        assert_eq!(
            c.classes[1],
            ReactionClass::ClosedForm {
                rate: 0.005,
                terms: vec![(0, 1)]
            }
        );
    }

    #[test]
    fn goutsias_onto_dimer() {
        let p = goutsias();
        let proj = Projection::canonical(6, &[1]).unwrap();
        let c = classify_reactions(&p.network, &proj, false).unwrap();
        for j in 0..4 {
            assert_eq!(c.classes[j], ReactionClass::Inactive);
        }
        assert_eq!(c.j_mp(), vec![4, 5, 6, 7, 8]);
        assert!(matches!(c.classes[9], ReactionClass::ClosedForm { .. }));
    }

    #[test]
    fn forced_regression_keeps_inactive() {
        let p = michaelis_menten();
        let proj = Projection::identity(4).unwrap();
        let c = classify_reactions(&p.network, &proj, true).unwrap();
        assert_eq!(c.j_mp(), vec![0, 1, 2]);
    }
}
