use crate::crl::CrlAgent;
use crate::envs::{EnvKind, EnvSpec};
use crate::error::{dim_err, Error, Result};
use crate::nn::RealArray;
use crate::scalar::Scalar;
use crate::table::{fmt_f64, Table};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QCell {
    pub x: f64,
    pub y: f64,
    /// Critic energy against the goal; NaN inside walls.
    pub energy: f64,
}

/// Sample points of a `resolution × resolution` grid over the layout,
/// row by row from the top-left.
pub fn grid_points(spec: &EnvSpec, resolution: usize) -> Result<Vec<[f64; 2]>> {
    if resolution == 0 {
        return Err(Error::Usage("grid resolution must be positive".into()));
    }
    let layout = spec
        .layout()
        .ok_or_else(|| Error::Unsupported(format!("{} is not a 2D positional environment", spec.name)))?;
    let [w, h] = layout.extent();
    let step = |i: usize, len: f64| (i as f64 + 0.5) / resolution as f64 * len;
    Ok((0..resolution)
        .flat_map(|r| (0..resolution).map(move |c| [step(c, w), step(r, h)]))
        .collect())
}

/// Critic energy `−‖φ(s(x, y), a) − ψ(goal)‖` on a grid of positions, where
/// `s(x, y)` is the zero-velocity observation at that position.
pub fn export_q_grid<T: Scalar>(
    agent: &CrlAgent<T>,
    spec: &EnvSpec,
    goal: [f64; 2],
    resolution: usize,
    action: Option<&[f64]>,
) -> Result<Vec<QCell>> {
    if spec.kind != EnvKind::Point {
        return Err(Error::Unsupported(format!("{} is not a 2D positional environment", spec.name)));
    }
    let zero = vec![0.0; spec.action_dim];
    let action = action.unwrap_or(&zero);
    if action.len() != spec.action_dim {
        return Err(dim_err("q-grid action", spec.action_dim, action.len()));
    }
    let layout = spec.layout().expect("point env has a layout");
    let points = grid_points(spec, resolution)?;
    let free: Vec<[f64; 2]> = points.iter().copied().filter(|&p| layout.cell_of(p).is_some()).collect();
    let mut energies = Vec::new();
    if !free.is_empty() {
        let mut states = Vec::with_capacity(free.len() * spec.state_dim);
        let mut actions = Vec::with_capacity(free.len() * spec.action_dim);
        for p in &free {
            states.extend(spec.observation_at(*p)?);
            actions.extend_from_slice(action);
        }
        let s = RealArray::<T>::from_f64(&[free.len(), spec.state_dim], &states)?;
        let a = RealArray::<T>::from_f64(&[free.len(), spec.action_dim], &actions)?;
        let phi = agent.critic.embed_sa(&s, &a)?;
        let psi = agent.critic.embed_goal(&RealArray::<T>::from_f64(&[1, 2], &goal)?)?;
        for r in 0..free.len() {
            let d2: f64 = phi
                .row(r)
                .iter()
                .zip(psi.row(0))
                .map(|(x, y)| (x.as_f64() - y.as_f64()).powi(2))
                .sum();
            energies.push(-d2.sqrt());
        }
    }
    let mut it = energies.into_iter();
    Ok(points
        .into_iter()
        .map(|p| QCell {
            x: p[0],
            y: p[1],
            energy: if layout.cell_of(p).is_some() { it.next().expect("one per free point") } else { f64::NAN },
        })
        .collect())
}

pub fn q_grid_table(cells: &[QCell]) -> Table {
    let mut t = Table::new(&["x", "y", "energy"]);
    for c in cells {
        t.push(vec![fmt_f64(c.x), fmt_f64(c.y), fmt_f64(c.energy)]).expect("3 columns");
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::preset;
    use crate::trainer::TrainConfig;

    fn agent(spec: &EnvSpec) -> CrlAgent<f64> {
        let mut c = TrainConfig::desk();
        c.width = 8;
        c.repr_dim = 4;
        CrlAgent::new(c.agent_config(spec), 1).unwrap()
    }

    #[test]
    fn walls_are_nan_and_free_cells_finite() {
        let spec = preset("point_umaze").unwrap();
        let cells = export_q_grid(&agent(&spec), &spec, [1.5, 3.5], 5, None).unwrap();
        assert_eq!(cells.len(), 25);
        let layout = spec.layout().unwrap();
        for c in &cells {
            let free = layout.cell_of([c.x, c.y]).is_some();
            assert_eq!(c.energy.is_nan(), !free);
            if free {
                assert!(c.energy <= 0.0);
            }
        }
    }

    #[test]
    fn resolution_one_gives_one_row() {
        let spec = preset("point_reach").unwrap();
        let cells = export_q_grid(&agent(&spec), &spec, [1.5, 1.5], 1, None).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(q_grid_table(&cells).rows.len(), 1);
    }

    #[test]
    fn arm_is_unsupported() {
        let spec = preset("arm_reach").unwrap();
        let r = export_q_grid(&agent(&spec), &spec, [0.0, 0.0], 4, None);
        assert!(matches!(r, Err(Error::Unsupported(_))));
    }
}
