use crate::crl::CrlAgent;
use crate::error::Result;
use crate::nn::RealArray;
use crate::scalar::Scalar;
use crate::table::{fmt_f64, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualNorms {
    pub network: &'static str,
    /// Mean residual-branch output norm per block.
    pub block_means: Vec<f64>,
}

fn block_means<T: Scalar>(net: &crate::BuiltNetwork<T>, x: &RealArray<T>) -> Result<Vec<f64>> {
    let (_, norms) = net.net.forward_with_branch_norms(x)?;
    Ok(norms
        .iter()
        .map(|rows| rows.iter().sum::<f64>() / rows.len().max(1) as f64)
        .collect())
}

/// Per-block mean `‖F_i(h_i)‖₂` for the actor and both critic encoders on
/// a batch of row-major observations, actions and goals.
pub fn residual_norm_profile<T: Scalar>(
    agent: &CrlAgent<T>,
    states: &RealArray<T>,
    actions: &RealArray<T>,
    goals: &RealArray<T>,
) -> Result<Vec<ResidualNorms>> {
    Ok(vec![
        ResidualNorms {
            network: "actor",
            block_means: block_means(&agent.policy.actor, &states.hcat(goals)?)?,
        },
        ResidualNorms {
            network: "critic_sa",
            block_means: block_means(&agent.critic.sa_encoder, &states.hcat(actions)?)?,
        },
        ResidualNorms {
            network: "critic_g",
            block_means: block_means(&agent.critic.g_encoder, goals)?,
        },
    ])
}

pub fn residual_norm_table(profile: &[ResidualNorms]) -> Table {
    let mut t = Table::new(&["network", "block_index", "mean_norm"]);
    for p in profile {
        for (i, v) in p.block_means.iter().enumerate() {
            t.push(vec![p.network.to_string(), i.to_string(), fmt_f64(*v)]).expect("3 columns");
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::preset;
    use crate::trainer::TrainConfig;

    #[test]
    fn one_row_per_block_and_zeroed_block_is_silent() {
        let spec = preset("point_reach").unwrap();
        let mut c = TrainConfig::desk();
        c.width = 8;
        c.repr_dim = 4;
        c.actor_depth = 12;
        c.critic_depth = 8;
        let mut agent = CrlAgent::<f64>::new(c.agent_config(&spec), 2).unwrap();
        agent.critic.g_encoder.zero_block(1);
        let s = RealArray::from_f64(&[3, 4], &[0.5, 1.0, 0.0, 0.1, 2.0, 3.0, -0.1, 0.0, 4.0, 4.5, 0.2, 0.2]).unwrap();
        let a = RealArray::from_f64(&[3, 2], &[0.1, -0.2, 0.0, 0.5, 0.9, 0.9]).unwrap();
        let g = RealArray::from_f64(&[3, 2], &[1.5, 1.5, 2.5, 3.5, 5.0, 1.0]).unwrap();
        let p = residual_norm_profile(&agent, &s, &a, &g).unwrap();
        let sizes: Vec<usize> = p.iter().map(|r| r.block_means.len()).collect();
        assert_eq!(sizes, vec![3, 2, 2]);
        assert_eq!(p[2].block_means[1], 0.0);
        assert!(p[2].block_means[0] > 0.0);
        assert_eq!(residual_norm_table(&p).rows.len(), 7);
        assert_eq!(p, residual_norm_profile(&agent, &s, &a, &g).unwrap());
    }
}
