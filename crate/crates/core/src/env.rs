//! Environments: CartPole for training, tabular MDPs and one-shot games for
//! exact checks.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outcome of one transition.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<S> {
    pub state: S,
    pub reward: f64,
    pub done: bool,
}

/// A discrete-action episodic environment.
///
/// Environments are immutable descriptions; episode state is a separate value
/// threaded through `reset` and `step`.
pub trait Environment {
    type State: Clone;

    fn state_dim(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;
    fn is_terminal(&self, state: &Self::State) -> bool;
    /// Feature vector fed to a policy.
    fn observe(&self, state: &Self::State) -> Vec<f64>;
    fn step<R: Rng + ?Sized>(
        &self,
        state: &Self::State,
        action: usize,
        rng: &mut R,
    ) -> Result<Transition<Self::State>>;
}

fn check_action(action: usize, n_actions: usize) -> Result<()> {
    if action >= n_actions {
        return Err(Error::ActionOutOfRange { action, n_actions });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartPoleParams {
    pub gravity: f64,
    pub mass_cart: f64,
    pub mass_pole: f64,
    /// Distance from pivot to the pole's center of mass.
    pub half_length: f64,
    pub force: f64,
    pub dt: f64,
    pub x_threshold: f64,
    /// Radians.
    pub theta_threshold: f64,
    pub max_steps: usize,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            mass_cart: 1.0,
            mass_pole: 0.1,
            half_length: 0.5,
            force: 10.0,
            dt: 0.02,
            x_threshold: 2.4,
            theta_threshold: 12.0_f64.to_radians(),
            max_steps: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
    pub steps_elapsed: usize,
}

impl CartPoleState {
    pub fn new(x: f64, x_dot: f64, theta: f64, theta_dot: f64) -> Self {
        Self {
            x,
            x_dot,
            theta,
            theta_dot,
            steps_elapsed: 0,
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.x_dot, self.theta, self.theta_dot]
    }
}

/// Cart-pole balancing with the classic 200-step episode cap.
/// Action 0 pushes left, action 1 pushes right.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CartPole {
    pub params: CartPoleParams,
}

impl CartPole {
    pub fn new(params: CartPoleParams) -> Self {
        Self { params }
    }

    /// Plain Euler update. Ignores termination; used by `step`.
    pub fn integrate(&self, state: &CartPoleState, force: f64) -> CartPoleState {
        let p = &self.params;
        let total_mass = p.mass_cart + p.mass_pole;
        let pole_moment = p.mass_pole * p.half_length;
        let (sin, cos) = state.theta.sin_cos();
        let temp = (force + pole_moment * state.theta_dot * state.theta_dot * sin) / total_mass;
        let theta_acc = (p.gravity * sin - cos * temp)
            / (p.half_length * (4.0 / 3.0 - p.mass_pole * cos * cos / total_mass));
        let x_acc = temp - pole_moment * theta_acc * cos / total_mass;
        CartPoleState {
            x: state.x + p.dt * state.x_dot,
            x_dot: state.x_dot + p.dt * x_acc,
            theta: state.theta + p.dt * state.theta_dot,
            theta_dot: state.theta_dot + p.dt * theta_acc,
            steps_elapsed: state.steps_elapsed + 1,
        }
    }
}

impl Environment for CartPole {
    type State = CartPoleState;

    fn state_dim(&self) -> usize {
        4
    }

    fn n_actions(&self) -> usize {
        2
    }

    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> CartPoleState {
        let mut draw = || rng.gen_range(-0.05..0.05);
        CartPoleState::new(draw(), draw(), draw(), draw())
    }

    fn is_terminal(&self, s: &CartPoleState) -> bool {
        s.x.abs() > self.params.x_threshold
            || s.theta.abs() > self.params.theta_threshold
            || s.steps_elapsed >= self.params.max_steps
    }

    fn observe(&self, s: &CartPoleState) -> Vec<f64> {
        s.to_array().to_vec()
    }

    fn step<R: Rng + ?Sized>(
        &self,
        state: &CartPoleState,
        action: usize,
        _rng: &mut R,
    ) -> Result<Transition<CartPoleState>> {
        check_action(action, 2)?;
        if self.is_terminal(state) {
            return Err(Error::StepAfterDone);
        }
        let force = if action == 1 {
            self.params.force
        } else {
            -self.params.force
        };
        let next = self.integrate(state, force);
        Ok(Transition {
            done: self.is_terminal(&next),
            state: next,
            reward: 1.0,
        })
    }
}

const ROW_TOLERANCE: f64 = 1e-12;

fn normalized_row(row: &[f64], what: &str) -> Result<Vec<f64>> {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidDistribution(format!(
            "{what}: negative or non-finite entry"
        )));
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > ROW_TOLERANCE {
        return Err(Error::InvalidDistribution(format!("{what}: sums to {total}")));
    }
    Ok(row.iter().map(|p| p / total).collect())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TabularMdpFile {
    n_states: usize,
    n_actions: usize,
    /// `transition[s][a][s']`.
    transition: Vec<Vec<Vec<f64>>>,
    /// `reward[s][a]`.
    reward: Vec<Vec<f64>>,
    horizon: usize,
    gamma: f64,
    initial_dist: Vec<f64>,
}

/// Finite-horizon MDP with explicit tables. Transition rows and the initial
/// distribution are validated (sum to 1 within `1e-12`) and renormalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TabularMdpFile", into = "TabularMdpFile")]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<Vec<Vec<f64>>>,
    reward: Vec<Vec<f64>>,
    horizon: usize,
    gamma: f64,
    initial_dist: Vec<f64>,
}

impl TryFrom<TabularMdpFile> for TabularMdp {
    type Error = Error;

    fn try_from(f: TabularMdpFile) -> Result<Self> {
        TabularMdp::new(f.transition, f.reward, f.horizon, f.gamma, f.initial_dist).and_then(|m| {
            if m.n_states != f.n_states || m.n_actions != f.n_actions {
                Err(Error::InvalidConfig(format!(
                    "declared {}x{} but tables are {}x{}",
                    f.n_states, f.n_actions, m.n_states, m.n_actions
                )))
            } else {
                Ok(m)
            }
        })
    }
}

impl From<TabularMdp> for TabularMdpFile {
    fn from(m: TabularMdp) -> Self {
        Self {
            n_states: m.n_states,
            n_actions: m.n_actions,
            transition: m.transition,
            reward: m.reward,
            horizon: m.horizon,
            gamma: m.gamma,
            initial_dist: m.initial_dist,
        }
    }
}

impl TabularMdp {
    pub fn new(
        transition: Vec<Vec<Vec<f64>>>,
        reward: Vec<Vec<f64>>,
        horizon: usize,
        gamma: f64,
        initial_dist: Vec<f64>,
    ) -> Result<Self> {
        let n_states = transition.len();
        if n_states == 0 {
            return Err(Error::Empty("transition table"));
        }
        let n_actions = transition[0].len();
        if n_actions == 0 {
            return Err(Error::Empty("action set"));
        }
        if horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidConfig(format!("gamma {gamma} outside [0, 1)")));
        }
        if reward.len() != n_states {
            return Err(Error::Dimension {
                what: "reward rows",
                expected: n_states,
                actual: reward.len(),
            });
        }
        if initial_dist.len() != n_states {
            return Err(Error::Dimension {
                what: "initial distribution",
                expected: n_states,
                actual: initial_dist.len(),
            });
        }
        let mut rows = Vec::with_capacity(n_states);
        for (s, per_action) in transition.iter().enumerate() {
            if per_action.len() != n_actions {
                return Err(Error::Dimension {
                    what: "transition actions",
                    expected: n_actions,
                    actual: per_action.len(),
                });
            }
            let mut out = Vec::with_capacity(n_actions);
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != n_states {
                    return Err(Error::Dimension {
                        what: "transition row",
                        expected: n_states,
                        actual: row.len(),
                    });
                }
                out.push(normalized_row(row, &format!("transition[{s}][{a}]"))?);
            }
            rows.push(out);
        }
        for r in &reward {
            if r.len() != n_actions {
                return Err(Error::Dimension {
                    what: "reward row",
                    expected: n_actions,
                    actual: r.len(),
                });
            }
            if r.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("reward table"));
            }
        }
        let initial_dist = normalized_row(&initial_dist, "initial distribution")?;
        Ok(Self {
            n_states,
            n_actions,
            transition: rows,
            reward,
            horizon,
            gamma,
            initial_dist,
        })
    }

    /// Random instance with Dirichlet(1)-like rows and rewards in `[-1, 1]`.
    pub fn random<R: Rng + ?Sized>(
        n_states: usize,
        n_actions: usize,
        horizon: usize,
        gamma: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut simplex = |n: usize| -> Vec<f64> {
            let raw: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / total).collect()
        };
        let transition = (0..n_states)
            .map(|_| (0..n_actions).map(|_| simplex(n_states)).collect())
            .collect();
        let initial = simplex(n_states);
        let reward = (0..n_states)
            .map(|_| (0..n_actions).map(|_| rng.gen_range(-1.0..=1.0)).collect())
            .collect();
        Self::new(transition, reward, horizon, gamma, initial)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn transition(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[s][a]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s][a]
    }

    pub fn reward_bound(&self) -> f64 {
        self.reward.iter().flatten().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Checks a `pi[s][a]` table against this MDP's shape.
    pub fn check_policy(&self, policy: &[Vec<f64>]) -> Result<()> {
        if policy.len() != self.n_states {
            return Err(Error::Dimension {
                what: "policy rows",
                expected: self.n_states,
                actual: policy.len(),
            });
        }
        for row in policy {
            if row.len() != self.n_actions {
                return Err(Error::Dimension {
                    what: "policy row",
                    expected: self.n_actions,
                    actual: row.len(),
                });
            }
            crate::policy::validate_distribution(row)?;
        }
        Ok(())
    }

    /// `Pr(s_t = s)` for `t = 0..T` (the final entry is the state after the
    /// last action), by forward recursion.
    pub fn state_marginals(&self, policy: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        self.check_policy(policy)?;
        let mut out = Vec::with_capacity(self.horizon + 1);
        out.push(self.initial_dist.clone());
        for _ in 0..self.horizon {
            let prev = out.last().unwrap();
            let mut next = vec![0.0; self.n_states];
            for (s, &ps) in prev.iter().enumerate() {
                if ps == 0.0 {
                    continue;
                }
                for (a, &pa) in policy[s].iter().enumerate() {
                    for (n, &pt) in self.transition[s][a].iter().enumerate() {
                        next[n] += ps * pa * pt;
                    }
                }
            }
            out.push(next);
        }
        Ok(out)
    }
}

fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Position in a tabular episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TabularState {
    pub state: usize,
    pub t: usize,
}

impl Environment for TabularMdp {
    type State = TabularState;

    fn state_dim(&self) -> usize {
        self.n_states
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> TabularState {
        TabularState {
            state: sample_index(&self.initial_dist, rng),
            t: 0,
        }
    }

    fn is_terminal(&self, s: &TabularState) -> bool {
        s.t >= self.horizon
    }

    /// One-hot encoding of the state.
    fn observe(&self, s: &TabularState) -> Vec<f64> {
        let mut v = vec![0.0; self.n_states];
        v[s.state] = 1.0;
        v
    }

    fn step<R: Rng + ?Sized>(
        &self,
        s: &TabularState,
        action: usize,
        rng: &mut R,
    ) -> Result<Transition<TabularState>> {
        check_action(action, self.n_actions)?;
        if self.is_terminal(s) {
            return Err(Error::StepAfterDone);
        }
        let next = TabularState {
            state: sample_index(&self.transition[s.state][action], rng),
            t: s.t + 1,
        };
        Ok(Transition {
            done: self.is_terminal(&next),
            reward: self.reward[s.state][action],
            state: next,
        })
    }
}

/// `(s_0, a_0, r_0, ..., s_{T-1}, a_{T-1}, r_{T-1}, s_T)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularTrajectory {
    /// `T + 1` entries.
    pub states: Vec<usize>,
    pub actions: Vec<usize>,
    pub rewards: Vec<f64>,
}

/// Samples exactly `T` transitions under the table policy `pi[s][a]`.
pub fn tabular_rollout<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    policy: &[Vec<f64>],
    rng: &mut R,
) -> Result<TabularTrajectory> {
    mdp.check_policy(policy)?;
    let mut state = mdp.reset(rng);
    let mut traj = TabularTrajectory {
        states: vec![state.state],
        actions: Vec::with_capacity(mdp.horizon),
        rewards: Vec::with_capacity(mdp.horizon),
    };
    while !mdp.is_terminal(&state) {
        let action = sample_index(&policy[state.state], rng);
        let tr = mdp.step(&state, action, rng)?;
        traj.actions.push(action);
        traj.rewards.push(tr.reward);
        traj.states.push(tr.state.state);
        state = tr.state;
    }
    Ok(traj)
}

/// A single-state, single-step game with reward `R(a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneShotGame {
    rewards: Vec<f64>,
    r_max: f64,
}

impl OneShotGame {
    pub fn new(rewards: Vec<f64>, r_max: f64) -> Result<Self> {
        if rewards.is_empty() {
            return Err(Error::Empty("reward table"));
        }
        if rewards.iter().any(|r| !r.is_finite()) || !r_max.is_finite() {
            return Err(Error::NonFinite("reward table"));
        }
        if let Some(r) = rewards.iter().find(|r| r.abs() > r_max) {
            return Err(Error::InvalidConfig(format!(
                "reward {r} exceeds declared bound {r_max}"
            )));
        }
        Ok(Self { rewards, r_max })
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }
}

impl Environment for OneShotGame {
    /// `true` once the single action has been taken.
    type State = bool;

    fn state_dim(&self) -> usize {
        1
    }

    fn n_actions(&self) -> usize {
        self.rewards.len()
    }

    fn reset<R: Rng + ?Sized>(&self, _rng: &mut R) -> bool {
        false
    }

    fn is_terminal(&self, done: &bool) -> bool {
        *done
    }

    fn observe(&self, _: &bool) -> Vec<f64> {
        vec![1.0]
    }

    fn step<R: Rng + ?Sized>(&self, done: &bool, action: usize, _rng: &mut R) -> Result<Transition<bool>> {
        check_action(action, self.rewards.len())?;
        if *done {
            return Err(Error::StepAfterDone);
        }
        Ok(Transition {
            state: true,
            reward: self.rewards[action],
            done: true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reset_is_seeded_and_bounded() {
        let env = CartPole::default();
        let a = env.reset(&mut ChaCha8Rng::seed_from_u64(3));
        let b = env.reset(&mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        assert_eq!(a.steps_elapsed, 0);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut sums = [0.0; 4];
        let n = 10_000;
        for _ in 0..n {
            let s = env.reset(&mut rng).to_array();
            for (acc, v) in sums.iter_mut().zip(s) {
                assert!((-0.05..=0.05).contains(&v));
                *acc += v;
            }
        }
        for s in sums {
            assert!((s / n as f64).abs() < 0.002);
        }
    }

    #[test]
    fn push_right_accelerates_cart() {
        let env = CartPole::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let zero = CartPoleState::new(0.0, 0.0, 0.0, 0.0);
        let right = env.step(&zero, 1, &mut rng).unwrap();
        assert!(right.state.x_dot > 0.0);
        assert!(right.state.theta_dot < 0.0);
        let left = env.step(&zero, 0, &mut rng).unwrap();
        assert!(left.state.x_dot < 0.0);
        assert_eq!(right.reward, 1.0);
        assert!(!right.done);
        assert!(env.step(&zero, 2, &mut rng).is_err());
    }

    #[test]
    fn mirrored_trajectories_mirror_exactly() {
        let env = CartPole::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut s = env.reset(&mut rng);
        let mut m = CartPoleState::new(-s.x, -s.x_dot, -s.theta, -s.theta_dot);
        loop {
            let a = rng.gen_range(0..2);
            let ts = env.step(&s, a, &mut rng).unwrap();
            let tm = env.step(&m, 1 - a, &mut rng).unwrap();
            for (p, q) in ts.state.to_array().iter().zip(tm.state.to_array()) {
                assert_eq!(*p, -q);
            }
            assert_eq!(ts.done, tm.done);
            if ts.done {
                break;
            }
            s = ts.state;
            m = tm.state;
        }
    }

    #[test]
    fn termination_matches_thresholds() {
        let env = CartPole::default();
        let limit = 12.0_f64.to_radians();
        let mk = |x, theta, steps| CartPoleState {
            steps_elapsed: steps,
            ..CartPoleState::new(x, 0.0, theta, 0.0)
        };
        assert!(env.is_terminal(&mk(0.0, limit + 1e-9, 0)));
        assert!(env.is_terminal(&mk(0.0, -limit - 1e-9, 0)));
        assert!(!env.is_terminal(&mk(0.0, limit, 0)));
        assert!(env.is_terminal(&mk(2.4 + 1e-9, 0.0, 0)));
        assert!(!env.is_terminal(&mk(2.4, 0.0, 0)));
        assert!(env.is_terminal(&mk(0.0, 0.0, 200)));
        assert!(!env.is_terminal(&mk(0.0, 0.0, 199)));

        let mut rng = ChaCha8Rng::seed_from_u64(0);
        // crosses the angle limit within one step
        let edge = CartPoleState::new(0.0, 0.0, limit - 1e-6, 1.0);
        let t = env.step(&edge, 1, &mut rng).unwrap();
        assert!(t.state.theta > limit);
        assert!(t.done);
        assert_eq!(t.reward, 1.0);
        assert_eq!(env.step(&t.state, 0, &mut rng), Err(Error::StepAfterDone));
    }

    #[test]
    fn random_play_done_iff_threshold() {
        let env = CartPole::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let mut s = env.reset(&mut rng);
            loop {
                let t = env.step(&s, rng.gen_range(0..2), &mut rng).unwrap();
                let n = &t.state;
                let expect =
                    n.x.abs() > 2.4 || n.theta.abs() > 12.0_f64.to_radians() || n.steps_elapsed == 200;
                assert_eq!(t.done, expect);
                if t.done {
                    break;
                }
                s = t.state;
            }
        }
    }

    #[test]
    fn hanging_pole_period_matches_linearized_pendulum() {
        let params = CartPoleParams {
            gravity: -9.8,
            force: 0.0,
            theta_threshold: f64::INFINITY,
            x_threshold: f64::INFINITY,
            max_steps: usize::MAX,
            ..CartPoleParams::default()
        };
        let env = CartPole::new(params);
        let mut s = CartPoleState::new(0.0, 0.0, 0.01, 0.0);
        let mut crossings = Vec::new();
        for step in 0..400 {
            let next = env.integrate(&s, 0.0);
            if s.theta > 0.0 && next.theta <= 0.0 {
                // linear interpolation of the downward crossing time
                let frac = s.theta / (s.theta - next.theta);
                crossings.push((step as f64 + frac) * params.dt);
            }
            s = next;
        }
        assert!(crossings.len() >= 4);
        let periods: Vec<f64> = crossings.windows(2).map(|w| w[1] - w[0]).collect();
        let measured = periods.iter().sum::<f64>() / periods.len() as f64;
        let p = CartPoleParams::default();
        let omega2 = p.gravity / (p.half_length * (4.0 / 3.0 - p.mass_pole / (p.mass_cart + p.mass_pole)));
        let analytic = 2.0 * std::f64::consts::PI / omega2.sqrt();
        assert!((analytic - 1.582).abs() < 1e-3);
        assert!(
            (measured - analytic).abs() / analytic < 0.05,
            "{measured} vs {analytic}"
        );
    }

    fn chain_mdp(horizon: usize) -> TabularMdp {
        // state 1 is absorbing; action 1 moves 0 -> 1
        TabularMdp::new(
            vec![
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            ],
            vec![vec![0.0, 1.0], vec![0.5, 0.5]],
            horizon,
            0.9,
            vec![1.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn deterministic_rollout_is_unique() {
        let mdp = chain_mdp(3);
        let policy = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        let a = tabular_rollout(&mdp, &policy, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = tabular_rollout(&mdp, &policy, &mut ChaCha8Rng::seed_from_u64(99)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.states, vec![0, 1, 1, 1]);
        assert_eq!(a.actions, vec![1, 0, 0]);
        assert_eq!(a.rewards, vec![1.0, 0.5, 0.5]);
    }

    #[test]
    fn rollout_lengths_follow_horizon() {
        let mdp = chain_mdp(3);
        let policy = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let t = tabular_rollout(&mdp, &policy, &mut rng).unwrap();
            assert_eq!(t.states.len(), 4);
            assert_eq!(t.actions.len(), 3);
            assert_eq!(t.rewards.len(), 3);
        }
        assert!(tabular_rollout(&mdp, &[vec![0.5, 0.6], vec![0.5, 0.5]], &mut rng).is_err());
        assert!(tabular_rollout(&mdp, &[vec![1.0, 0.0]], &mut rng).is_err());
    }

    #[test]
    fn visit_frequencies_match_forward_recursion() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mdp = TabularMdp::random(3, 2, 4, 0.9, &mut rng).unwrap();
        let policy = vec![vec![0.3, 0.7], vec![0.6, 0.4], vec![0.1, 0.9]];
        // independent oracle: distribution over s_t via explicit matrix products mu P_pi^t
        let p_pi: Vec<Vec<f64>> = (0..3)
            .map(|s| {
                (0..3)
                    .map(|n| (0..2).map(|a| policy[s][a] * mdp.transition(s, a)[n]).sum())
                    .collect()
            })
            .collect();
        let mut row = mdp.initial_dist().to_vec();
        let mut exact = vec![row.clone()];
        for _ in 0..4 {
            row = (0..3)
                .map(|n| (0..3).map(|s| row[s] * p_pi[s][n]).sum())
                .collect();
            exact.push(row.clone());
        }
        let marginals = mdp.state_marginals(&policy).unwrap();
        for (m, e) in marginals.iter().zip(&exact) {
            for (a, b) in m.iter().zip(e) {
                assert!((a - b).abs() < 1e-14);
            }
        }

        let n = 100_000;
        let mut counts = vec![vec![0usize; 3]; 5];
        for _ in 0..n {
            let t = tabular_rollout(&mdp, &policy, &mut rng).unwrap();
            for (step, &s) in t.states.iter().enumerate() {
                counts[step][s] += 1;
            }
        }
        for (step, row) in counts.iter().enumerate() {
            for (s, &c) in row.iter().enumerate() {
                let p = exact[step][s];
                let sigma = (p * (1.0 - p) / n as f64).sqrt();
                let freq = c as f64 / n as f64;
                assert!(
                    (freq - p).abs() <= 3.0 * sigma + 1e-12,
                    "t={step} s={s}: {freq} vs {p}"
                );
            }
        }
    }

    #[test]
    fn mdp_validation_and_json_round_trip() {
        let mdp = chain_mdp(2);
        let json = serde_json::to_string(&mdp).unwrap();
        let back: TabularMdp = serde_json::from_str(&json).unwrap();
        assert_eq!(back, mdp);

        let bad_row = r#"{"n_states":1,"n_actions":1,"transition":[[[0.9]]],"reward":[[0.0]],
            "horizon":1,"gamma":0.5,"initial_dist":[1.0]}"#;
        assert!(serde_json::from_str::<TabularMdp>(bad_row).is_err());
        let bad_gamma = bad_row.replace("0.9", "1.0").replace("0.5", "1.0");
        assert!(serde_json::from_str::<TabularMdp>(&bad_gamma).is_err());
        let mismatch = bad_row
            .replace("0.9", "1.0")
            .replace("\"n_actions\":1", "\"n_actions\":2");
        assert!(serde_json::from_str::<TabularMdp>(&mismatch).is_err());
        let ok = bad_row.replace("0.9", "1.0");
        assert!(serde_json::from_str::<TabularMdp>(&ok).is_ok());
        assert!(TabularMdp::new(vec![vec![vec![1.0]]], vec![vec![0.0]], 0, 0.5, vec![1.0]).is_err());
    }

    #[test]
    fn mdp_step_after_horizon_rejected() {
        let mdp = chain_mdp(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = mdp.reset(&mut rng);
        let t = mdp.step(&s, 1, &mut rng).unwrap();
        assert!(t.done);
        assert_eq!(mdp.observe(&t.state), vec![0.0, 1.0]);
        assert_eq!(mdp.step(&t.state, 0, &mut rng), Err(Error::StepAfterDone));
    }

    #[test]
    fn one_shot_game_contract() {
        let game = OneShotGame::new(vec![1.0, -1.0], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = game.reset(&mut rng);
        let t = game.step(&s, 1, &mut rng).unwrap();
        assert_eq!((t.reward, t.done), (-1.0, true));
        assert_eq!(game.step(&t.state, 0, &mut rng), Err(Error::StepAfterDone));
        assert!(OneShotGame::new(vec![2.0], 1.0).is_err());
        assert!(OneShotGame::new(vec![], 1.0).is_err());
    }
}
