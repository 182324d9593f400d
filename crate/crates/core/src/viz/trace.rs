use crate::crl::CrlAgent;
use crate::envs::TraceStep;
use crate::error::{Error, Result};
use crate::nn::RealArray;
use crate::scalar::Scalar;
use crate::table::{fmt_f64, Table};

use super::pca::{pca_project, PcaResult};

/// Columns `t, obs_0.., action_0.., goal_x, goal_y, near_goal`.
pub fn trace_table(steps: &[TraceStep]) -> Table {
    let (od, ad) = steps.first().map_or((0, 0), |s| (s.obs.len(), s.action.len()));
    let mut header = vec!["t".to_string()];
    header.extend((0..od).map(|i| format!("obs_{i}")));
    header.extend((0..ad).map(|i| format!("action_{i}")));
    header.extend(["goal_x", "goal_y", "near_goal"].map(String::from));
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(&refs);
    for s in steps {
        let mut row = vec![s.t.to_string()];
        row.extend(s.obs.iter().chain(&s.action).chain(&s.goal).map(|v| fmt_f64(*v)));
        row.push((s.near_goal as u8).to_string());
        t.push(row).expect("row built from the header");
    }
    t
}

/// State-action embeddings `φ(s, a)` along a trace, projected on their
/// top `k` principal directions.
pub fn embedding_pca<T: Scalar>(agent: &CrlAgent<T>, steps: &[TraceStep], k: usize) -> Result<PcaResult> {
    if steps.len() < 2 {
        return Err(Error::Usage("embedding PCA needs at least two steps".into()));
    }
    let n = steps.len();
    let (od, ad) = (steps[0].obs.len(), steps[0].action.len());
    let s: Vec<f64> = steps.iter().flat_map(|s| s.obs.iter().copied()).collect();
    let a: Vec<f64> = steps.iter().flat_map(|s| s.action.iter().copied()).collect();
    let phi = agent
        .critic
        .embed_sa(&RealArray::from_f64(&[n, od], &s)?, &RealArray::from_f64(&[n, ad], &a)?)?;
    pca_project(&phi.to_f64_vec(), n, agent.critic.repr_dim, k)
}

/// Columns `t, pc_1..pc_k`.
pub fn pca_table(result: &PcaResult) -> Table {
    let mut header = vec!["t".to_string()];
    header.extend((1..=result.k).map(|i| format!("pc_{i}")));
    let refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let mut t = Table::new(&refs);
    for (i, row) in result.coords.chunks(result.k).enumerate() {
        let mut r = vec![i.to_string()];
        r.extend(row.iter().map(|v| fmt_f64(*v)));
        t.push(r).expect("row built from the header");
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{preset, rollout_trace, FnPolicy};
    use crate::trainer::TrainConfig;

    #[test]
    fn trace_and_embedding_shapes() {
        let spec = preset("point_reach").unwrap();
        let mut c = TrainConfig::desk();
        c.width = 16;
        c.repr_dim = 8;
        let agent = CrlAgent::<f64>::new(c.agent_config(&spec), 1).unwrap();
        let tr = rollout_trace(&mut FnPolicy(|o: &[f64], g: &[f64]| vec![g[0] - o[0], g[1] - o[1]]), &spec, 0).unwrap();
        let t = trace_table(&tr);
        assert_eq!(t.header.len(), 1 + 4 + 2 + 3);
        assert_eq!(t.rows.len(), spec.episode_length);
        let p = embedding_pca(&agent, &tr, 2).unwrap();
        assert_eq!(p.coords.len(), 2 * tr.len());
        assert!((p.explained_all.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        assert_eq!(pca_table(&p).rows.len(), tr.len());
        assert!(embedding_pca(&agent, &tr[..1], 2).is_err());
    }
}
