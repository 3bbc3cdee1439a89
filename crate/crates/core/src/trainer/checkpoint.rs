//! Checkpoints: a tensor archive for parameters, optimizer moments and replay
//! contents, plus a JSON manifest for everything else.

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::approx::{Mlp, TensorArchive};
use crate::error::{Error, Result};
use crate::lagrange::LagrangeState;
use crate::mdp::{Environment, ProblemSpec, Transition};
use crate::optim::Adam;

use super::agent::UpdateStats;
use super::state::TrainerState;
use super::{Algo, TrainerConfig};

pub const TENSORS_FILE: &str = "checkpoint.tensors";
pub const STATE_FILE: &str = "checkpoint.json";

#[derive(Serialize, Deserialize)]
struct OptimizerMeta {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
}

impl OptimizerMeta {
    fn of(opt: &Adam) -> Self {
        Self {
            lr: opt.lr,
            beta1: opt.beta1,
            beta2: opt.beta2,
            eps: opt.eps,
            step: opt.step,
        }
    }

    fn restore(&self, archive: &TensorArchive, name: &str) -> Result<Adam> {
        Ok(Adam {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            step: self.step,
            m: archive.require(&format!("adam.{name}.m"))?.to_vec(),
            v: archive.require(&format!("adam.{name}.v"))?.to_vec(),
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: TrainerConfig,
    algo: Algo,
    lagrange: LagrangeState,
    iteration: u64,
    episode: u64,
    threshold_reached_at: Option<u64>,
    stopped: bool,
    last_stats: Option<UpdateStats>,
    window: Vec<Vec<f64>>,
    window_returns: Vec<f64>,
    current: Vec<Transition>,
    obs: Option<Vec<f64>>,
    log_alpha: f64,
    optimizers: Vec<(String, OptimizerMeta)>,
    alpha_opt: Adam,
    act_rng: ChaCha8Rng,
    update_rng: ChaCha8Rng,
    replay_rng: ChaCha8Rng,
    env_state: serde_json::Value,
}

fn push_net(archive: &mut TensorArchive, prefix: &str, net: &Mlp) -> Result<()> {
    for (name, shape, values) in net.named_tensors() {
        archive.push(format!("{prefix}.{name}"), shape, values)?;
    }
    Ok(())
}

fn load_net(archive: &TensorArchive, prefix: &str, into: &mut Mlp) -> Result<()> {
    let params = archive.concat_prefix(prefix);
    if params.len() != into.num_params() {
        return Err(Error::Checkpoint(format!(
            "`{prefix}` has {} parameters, expected {}",
            params.len(),
            into.num_params()
        )));
    }
    into.params_mut().copy_from_slice(&params);
    Ok(())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

impl TrainerState {
    pub fn save(&self, dir: &Path, env: &dyn Environment) -> Result<()> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut archive = TensorArchive::new();
        let a = &self.agent;
        push_net(&mut archive, "policy", a.policy.net())?;
        for (i, c) in a.critics.iter().enumerate() {
            push_net(&mut archive, &format!("critic{i}"), c.net())?;
        }
        for (i, c) in a.targets.iter().enumerate() {
            push_net(&mut archive, &format!("target{i}"), c.net())?;
        }
        let opts = [("policy", &a.policy_opt), ("critic0", &a.critic_opts[0]), ("critic1", &a.critic_opts[1])];
        for (name, opt) in opts {
            archive.push(format!("adam.{name}.m"), vec![opt.m.len()], &opt.m)?;
            archive.push(format!("adam.{name}.v"), vec![opt.v.len()], &opt.v)?;
        }
        self.buffer.export(&mut archive)?;
        let manifest = Manifest {
            config: self.config.clone(),
            algo: self.algo,
            lagrange: self.lagrange.clone(),
            iteration: self.iteration,
            episode: self.episode,
            threshold_reached_at: self.threshold_reached_at,
            stopped: self.stopped,
            last_stats: self.last_stats,
            window: self.window.clone(),
            window_returns: self.window_returns.clone(),
            current: self.current.clone(),
            obs: self.obs.clone(),
            log_alpha: a.log_alpha,
            optimizers: opts.iter().map(|(n, o)| (n.to_string(), OptimizerMeta::of(o))).collect(),
            alpha_opt: a.alpha_opt.clone(),
            act_rng: self.act_rng.clone(),
            update_rng: self.update_rng.clone(),
            replay_rng: self.buffer.rng().clone(),
            env_state: env.save_state(),
        };
        let tensors = dir.join(TENSORS_FILE);
        let file = fs::File::create(&tensors).map_err(io_err(&tensors))?;
        archive.write_to(std::io::BufWriter::new(file))?;
        let state = dir.join(STATE_FILE);
        fs::write(&state, serde_json::to_vec_pretty(&manifest)?).map_err(io_err(&state))?;
        Ok(())
    }

    /// Restores a saved state and puts `env` back where it was.
    pub fn load(dir: &Path, env: &mut dyn Environment, spec: &ProblemSpec) -> Result<Self> {
        let state_path = dir.join(STATE_FILE);
        let text = fs::read(&state_path).map_err(|e| Error::Checkpoint(format!("{}: {e}", state_path.display())))?;
        let manifest: Manifest =
            serde_json::from_slice(&text).map_err(|e| Error::Checkpoint(format!("bad manifest: {e}")))?;
        let tensors_path = dir.join(TENSORS_FILE);
        let file =
            fs::File::open(&tensors_path).map_err(|e| Error::Checkpoint(format!("{}: {e}", tensors_path.display())))?;
        let archive = TensorArchive::read_from(std::io::BufReader::new(file))?;

        let mut state = TrainerState::new(env, spec, manifest.config, manifest.algo)?;
        let a = &mut state.agent;
        load_net(&archive, "policy", a.policy.net_mut())?;
        for i in 0..2 {
            load_net(&archive, &format!("critic{i}"), a.critics[i].net_mut())?;
            load_net(&archive, &format!("target{i}"), a.targets[i].net_mut())?;
        }
        for (name, meta) in &manifest.optimizers {
            let opt = meta.restore(&archive, name)?;
            match name.as_str() {
                "policy" => a.policy_opt = opt,
                "critic0" => a.critic_opts[0] = opt,
                "critic1" => a.critic_opts[1] = opt,
                other => return Err(Error::Checkpoint(format!("unknown optimizer `{other}`"))),
            }
        }
        a.log_alpha = manifest.log_alpha;
        a.alpha_opt = manifest.alpha_opt;
        state.buffer.import(&archive)?;
        state.buffer.set_rng(manifest.replay_rng);
        state.lagrange = manifest.lagrange;
        state.iteration = manifest.iteration;
        state.episode = manifest.episode;
        state.threshold_reached_at = manifest.threshold_reached_at;
        state.stopped = manifest.stopped;
        state.last_stats = manifest.last_stats;
        state.window = manifest.window;
        state.window_returns = manifest.window_returns;
        state.current = manifest.current;
        state.obs = manifest.obs;
        state.act_rng = manifest.act_rng;
        state.update_rng = manifest.update_rng;
        env.load_state(&manifest.env_state)?;
        Ok(state)
    }
}
