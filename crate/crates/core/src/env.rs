//! Grid battle simulator: two teams of ranged and melee units on a small
//! board, egocentric partial observations, action masks and a scripted
//! enemy team.
//!
//! Allies are the learning agents. Every ally chooses from
//! `[no-op, stop, north, south, east, west, attack enemy 0 .. E-1]`; enemies
//! use the mirrored set over ally slots and are driven by
//! [`scripted_opponent`]. Distances are Chebyshev distances on the grid.
//!
//! A step resolves in a fixed order: moves (allies then enemies, by index,
//! blocked by occupied cells), simultaneous attacks chosen against the
//! pre-step positions with damage hitting shields first, deaths, shield
//! regeneration, then the step counter and outcome. Mutual annihilation
//! counts as a win.

use std::fmt;
use std::io::Write;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::critic::InternalState;
use crate::error::{Error, Result};

pub const NOOP: usize = 0;
pub const STOP: usize = 1;
pub const MOVE_NORTH: usize = 2;
pub const MOVE_SOUTH: usize = 3;
pub const MOVE_EAST: usize = 4;
pub const MOVE_WEST: usize = 5;
/// Index of the first attack action; attack on slot `k` is `ATTACK_BASE + k`.
pub const ATTACK_BASE: usize = 6;

/// Per-unit features in [`observe`]'s own block.
pub const OWN_FEATURES: usize = 5;
/// Per-unit features for every other unit in an observation.
pub const OTHER_FEATURES: usize = 6;
/// Per-unit features in the global state.
pub const GLOBAL_UNIT_FEATURES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitClass {
    Ranged,
    Melee,
}

/// Numeric stats of one unit class, as they appear in the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitStats {
    pub max_hp: f64,
    pub max_shield: f64,
    pub attack_damage: f64,
    pub attack_range: u32,
    pub sight_range: u32,
    pub shield_regen_rate: f64,
    pub regen_delay: u32,
}

impl UnitStats {
    /// Stalker-like defaults.
    pub fn ranged() -> Self {
        Self {
            max_hp: 80.0,
            max_shield: 80.0,
            attack_damage: 13.0,
            attack_range: 6,
            sight_range: 9,
            shield_regen_rate: 2.0,
            regen_delay: 10,
        }
    }

    /// Zealot-like defaults.
    pub fn melee() -> Self {
        Self {
            max_hp: 100.0,
            max_shield: 50.0,
            attack_damage: 8.0,
            attack_range: 1,
            sight_range: 9,
            shield_regen_rate: 2.0,
            regen_delay: 10,
        }
    }

    fn validate(&self, name: &str, class: UnitClass) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::Config(format!("scenario.{name}.{field}: {why}")));
        if !(self.max_hp.is_finite() && self.max_hp > 0.0) {
            return bad("max_hp", "must be positive");
        }
        if !(self.max_shield.is_finite() && self.max_shield >= 0.0) {
            return bad("max_shield", "must be non-negative");
        }
        if !(self.attack_damage.is_finite() && self.attack_damage > 0.0) {
            return bad("attack_damage", "must be positive");
        }
        if self.attack_range == 0 {
            return bad("attack_range", "must be at least 1");
        }
        if class == UnitClass::Melee && self.attack_range != 1 {
            return bad("attack_range", "melee units attack at range 1");
        }
        if self.sight_range < self.attack_range {
            return bad("sight_range", "must be at least attack_range");
        }
        if !(self.shield_regen_rate.is_finite() && self.shield_regen_rate >= 0.0) {
            return bad("shield_regen_rate", "must be non-negative");
        }
        Ok(())
    }
}

/// Full description of a unit type.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitSpec {
    pub unit_class: UnitClass,
    pub stats: UnitStats,
}

fn default_allies() -> Vec<UnitClass> {
    use UnitClass::*;
    vec![Ranged, Ranged, Melee, Melee, Melee]
}

/// Scenario parameters; the defaults form the mini-2s3z battle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub grid_width: u32,
    pub grid_height: u32,
    pub episode_limit: u32,
    /// Columns from each edge in which a team spawns.
    pub spawn_depth: u32,
    /// Rows, centred vertically, in which a team spawns.
    pub spawn_height: u32,
    pub allies: Vec<UnitClass>,
    pub enemies: Vec<UnitClass>,
    pub ranged: UnitStats,
    pub melee: UnitStats,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            grid_width: 16,
            grid_height: 16,
            episode_limit: 120,
            spawn_depth: 3,
            spawn_height: 5,
            allies: default_allies(),
            enemies: default_allies(),
            ranged: UnitStats::ranged(),
            melee: UnitStats::melee(),
        }
    }
}

impl ScenarioConfig {
    pub fn unit_spec(&self, class: UnitClass) -> UnitSpec {
        let stats = match class {
            UnitClass::Ranged => self.ranged.clone(),
            UnitClass::Melee => self.melee.clone(),
        };
        UnitSpec {
            unit_class: class,
            stats,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::Config(format!("scenario.{field}: {why}")));
        if self.allies.is_empty() {
            return bad("allies", "team size must be at least 1".into());
        }
        if self.enemies.is_empty() {
            return bad("enemies", "team size must be at least 1".into());
        }
        if self.grid_width == 0 || self.grid_height == 0 {
            return bad("grid_width", "grid dimensions must be positive".into());
        }
        if self.episode_limit == 0 {
            return bad("episode_limit", "must be positive".into());
        }
        if self.spawn_depth == 0 || 2 * self.spawn_depth > self.grid_width {
            return bad(
                "spawn_depth",
                format!("must be in 1..={}", self.grid_width / 2),
            );
        }
        if self.spawn_height == 0 || self.spawn_height > self.grid_height {
            return bad(
                "spawn_height",
                format!("must be in 1..={}", self.grid_height),
            );
        }
        let cells = (self.spawn_depth * self.spawn_height) as usize;
        let largest = self.allies.len().max(self.enemies.len());
        if cells < largest {
            return bad(
                "spawn_depth",
                format!("spawn zone of {cells} cells cannot hold a team of {largest}"),
            );
        }
        self.ranged.validate("ranged", UnitClass::Ranged)?;
        self.melee.validate("melee", UnitClass::Melee)?;
        Ok(())
    }

    pub fn n_allies(&self) -> usize {
        self.allies.len()
    }

    pub fn n_enemies(&self) -> usize {
        self.enemies.len()
    }

    /// Size of an ally's action set.
    pub fn n_actions(&self) -> usize {
        ATTACK_BASE + self.enemies.len()
    }

    pub fn obs_dim(&self) -> usize {
        let others = self.allies.len() - 1 + self.enemies.len();
        OWN_FEATURES + OTHER_FEATURES * others + 3 + self.allies.len()
    }

    pub fn state_dim(&self) -> usize {
        GLOBAL_UNIT_FEATURES * (self.allies.len() + self.enemies.len()) + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitState {
    pub class: UnitClass,
    pub position: (i32, i32),
    pub hp: f64,
    pub shield: f64,
    pub alive: bool,
    pub steps_since_damaged: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    Ongoing,
    Won,
    Lost,
    Draw,
}

impl Outcome {
    pub fn is_terminal(self) -> bool {
        self != Outcome::Ongoing
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Outcome::Ongoing => "ongoing",
            Outcome::Won => "won",
            Outcome::Lost => "lost",
            Outcome::Draw => "draw",
        };
        f.write_str(s)
    }
}

/// Complete simulator state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorldState {
    pub ally_units: Vec<UnitState>,
    pub enemy_units: Vec<UnitState>,
    pub step_count: u32,
    pub episode_limit: u32,
    pub grid_width: u32,
    pub grid_height: u32,
    pub outcome: Outcome,
}

impl WorldState {
    pub fn dead_allies(&self) -> usize {
        self.ally_units.iter().filter(|u| !u.alive).count()
    }

    pub fn dead_enemies(&self) -> usize {
        self.enemy_units.iter().filter(|u| !u.alive).count()
    }

    fn in_bounds(&self, (x, y): (i32, i32)) -> bool {
        x >= 0 && y >= 0 && (x as u32) < self.grid_width && (y as u32) < self.grid_height
    }

    fn occupied(&self, cell: (i32, i32)) -> bool {
        self.ally_units
            .iter()
            .chain(&self.enemy_units)
            .any(|u| u.alive && u.position == cell)
    }

    fn units(&self, side: Side) -> &[UnitState] {
        match side {
            Side::Ally => &self.ally_units,
            Side::Enemy => &self.enemy_units,
        }
    }

    fn units_mut(&mut self, side: Side) -> &mut Vec<UnitState> {
        match side {
            Side::Ally => &mut self.ally_units,
            Side::Enemy => &mut self.enemy_units,
        }
    }
}

/// Shield and health lost by one unit in one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct UnitLoss {
    pub shield_lost: f64,
    pub hp_lost: f64,
}

/// What happened during one step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionEvents {
    pub ally_losses: Vec<UnitLoss>,
    pub enemy_losses: Vec<UnitLoss>,
    /// Shield regenerated this step, per unit.
    pub ally_regen: Vec<f64>,
    pub enemy_regen: Vec<f64>,
    pub allies_killed: usize,
    pub enemies_killed: usize,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Side {
    Ally,
    Enemy,
}

impl Side {
    fn opposing(self) -> Side {
        match self {
            Side::Ally => Side::Enemy,
            Side::Enemy => Side::Ally,
        }
    }
}

pub fn chebyshev(a: (i32, i32), b: (i32, i32)) -> u32 {
    (a.0 - b.0).unsigned_abs().max((a.1 - b.1).unsigned_abs())
}

fn move_delta(action: usize) -> Option<(i32, i32)> {
    match action {
        MOVE_NORTH => Some((0, -1)),
        MOVE_SOUTH => Some((0, 1)),
        MOVE_EAST => Some((1, 0)),
        MOVE_WEST => Some((-1, 0)),
        _ => None,
    }
}

/// Battle simulator for one scenario. `WorldState` values are threaded
/// through its methods; the simulator itself holds only the scenario.
#[derive(Debug, Clone)]
pub struct BattleEnv {
    config: ScenarioConfig,
}

impl BattleEnv {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    fn stats(&self, class: UnitClass) -> &UnitStats {
        match class {
            UnitClass::Ranged => &self.config.ranged,
            UnitClass::Melee => &self.config.melee,
        }
    }

    /// Places both teams at full health in their spawn zones.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> WorldState {
        let cfg = &self.config;
        let top = ((cfg.grid_height - cfg.spawn_height) / 2) as i32;
        let depth = cfg.spawn_depth as usize;
        let spawn = |classes: &[UnitClass], x0: i32, rng: &mut R| -> Vec<UnitState> {
            let cells = depth * cfg.spawn_height as usize;
            sample(rng, cells, classes.len())
                .into_iter()
                .zip(classes)
                .map(|(cell, &class)| {
                    let stats = self.stats(class);
                    UnitState {
                        class,
                        position: (x0 + (cell % depth) as i32, top + (cell / depth) as i32),
                        hp: stats.max_hp,
                        shield: stats.max_shield,
                        alive: true,
                        steps_since_damaged: 0,
                    }
                })
                .collect()
        };
        let ally_units = spawn(&cfg.allies, 0, rng);
        let enemy_units = spawn(&cfg.enemies, (cfg.grid_width - cfg.spawn_depth) as i32, rng);
        WorldState {
            ally_units,
            enemy_units,
            step_count: 0,
            episode_limit: cfg.episode_limit,
            grid_width: cfg.grid_width,
            grid_height: cfg.grid_height,
            outcome: Outcome::Ongoing,
        }
    }

    /// Legal-action mask of ally `agent_index`.
    pub fn available_actions(&self, state: &WorldState, agent_index: usize) -> Vec<bool> {
        self.mask_for(state, Side::Ally, agent_index)
    }

    fn mask_for(&self, state: &WorldState, side: Side, index: usize) -> Vec<bool> {
        let targets = state.units(side.opposing());
        let mut mask = vec![false; ATTACK_BASE + targets.len()];
        let unit = &state.units(side)[index];
        if !unit.alive {
            mask[NOOP] = true;
            return mask;
        }
        mask[STOP] = true;
        for action in [MOVE_NORTH, MOVE_SOUTH, MOVE_EAST, MOVE_WEST] {
            let (dx, dy) = move_delta(action).expect("move action");
            mask[action] = state.in_bounds((unit.position.0 + dx, unit.position.1 + dy));
        }
        let range = self.stats(unit.class).attack_range;
        for (k, target) in targets.iter().enumerate() {
            mask[ATTACK_BASE + k] = target.alive && chebyshev(unit.position, target.position) <= range;
        }
        mask
    }

    /// Enemy joint action: attack the nearest live ally when in range,
    /// otherwise step towards it along the axis with the larger gap
    /// (horizontal on ties). Ties between allies go to the lower index.
    pub fn scripted_opponent(&self, state: &WorldState) -> Vec<usize> {
        state
            .enemy_units
            .iter()
            .map(|enemy| {
                if !enemy.alive {
                    return NOOP;
                }
                let nearest = state
                    .ally_units
                    .iter()
                    .enumerate()
                    .filter(|(_, a)| a.alive)
                    .min_by_key(|(i, a)| (chebyshev(enemy.position, a.position), *i));
                let Some((target, ally)) = nearest else {
                    return STOP;
                };
                let distance = chebyshev(enemy.position, ally.position);
                if distance <= self.stats(enemy.class).attack_range {
                    return ATTACK_BASE + target;
                }
                let dx = ally.position.0 - enemy.position.0;
                let dy = ally.position.1 - enemy.position.1;
                if dx.abs() >= dy.abs() {
                    if dx > 0 {
                        MOVE_EAST
                    } else {
                        MOVE_WEST
                    }
                } else if dy > 0 {
                    MOVE_SOUTH
                } else {
                    MOVE_NORTH
                }
            })
            .collect()
    }

    /// Advances the battle by one tick under the allies' joint action.
    pub fn step(
        &self,
        state: &WorldState,
        ally_actions: &[usize],
    ) -> Result<(WorldState, TransitionEvents)> {
        let enemy_actions = self.scripted_opponent(state);
        self.step_with_enemy_actions(state, ally_actions, &enemy_actions)
    }

    /// [`step`](Self::step) with an explicit enemy joint action.
    pub fn step_with_enemy_actions(
        &self,
        state: &WorldState,
        ally_actions: &[usize],
        enemy_actions: &[usize],
    ) -> Result<(WorldState, TransitionEvents)> {
        if state.outcome.is_terminal() {
            return Err(Error::ContractViolation(
                "step called on a finished episode".into(),
            ));
        }
        for (side, actions) in [(Side::Ally, ally_actions), (Side::Enemy, enemy_actions)] {
            let n = state.units(side).len();
            if actions.len() != n {
                return Err(Error::ShapeMismatch {
                    what: "joint action length",
                    expected: n,
                    got: actions.len(),
                });
            }
            for (i, &a) in actions.iter().enumerate() {
                let mask = self.mask_for(state, side, i);
                if !mask.get(a).copied().unwrap_or(false) {
                    return Err(Error::ContractViolation(format!(
                        "{side:?} unit {i} submitted unavailable action {a}"
                    )));
                }
            }
        }

        let mut next = state.clone();

        for (side, actions) in [(Side::Ally, ally_actions), (Side::Enemy, enemy_actions)] {
            for (i, &a) in actions.iter().enumerate() {
                let Some((dx, dy)) = move_delta(a) else {
                    continue;
                };
                let from = next.units(side)[i].position;
                let to = (from.0 + dx, from.1 + dy);
                if next.in_bounds(to) && !next.occupied(to) {
                    next.units_mut(side)[i].position = to;
                }
            }
        }

        // Attack validity was checked against the pre-step state by the mask.
        let mut damage_to_allies = vec![0.0; state.ally_units.len()];
        let mut damage_to_enemies = vec![0.0; state.enemy_units.len()];
        for (side, actions) in [(Side::Ally, ally_actions), (Side::Enemy, enemy_actions)] {
            for (i, &a) in actions.iter().enumerate() {
                if a < ATTACK_BASE {
                    continue;
                }
                let damage = self.stats(state.units(side)[i].class).attack_damage;
                match side {
                    Side::Ally => damage_to_enemies[a - ATTACK_BASE] += damage,
                    Side::Enemy => damage_to_allies[a - ATTACK_BASE] += damage,
                }
            }
        }

        let (ally_losses, allies_killed) = apply_damage(&mut next.ally_units, &damage_to_allies);
        let (enemy_losses, enemies_killed) =
            apply_damage(&mut next.enemy_units, &damage_to_enemies);

        let ally_regen = self.regenerate(&mut next.ally_units, &damage_to_allies);
        let enemy_regen = self.regenerate(&mut next.enemy_units, &damage_to_enemies);

        next.step_count += 1;
        let allies_alive = next.ally_units.iter().any(|u| u.alive);
        let enemies_alive = next.enemy_units.iter().any(|u| u.alive);
        next.outcome = if !enemies_alive {
            Outcome::Won
        } else if !allies_alive {
            Outcome::Lost
        } else if next.step_count >= next.episode_limit {
            Outcome::Draw
        } else {
            Outcome::Ongoing
        };

        let events = TransitionEvents {
            ally_losses,
            enemy_losses,
            ally_regen,
            enemy_regen,
            allies_killed,
            enemies_killed,
            outcome: next.outcome,
        };
        Ok((next, events))
    }

    fn regenerate(&self, units: &mut [UnitState], damage: &[f64]) -> Vec<f64> {
        units
            .iter_mut()
            .zip(damage)
            .map(|(unit, &d)| {
                if !unit.alive {
                    return 0.0;
                }
                if d > 0.0 {
                    unit.steps_since_damaged = 0;
                    return 0.0;
                }
                unit.steps_since_damaged = unit.steps_since_damaged.saturating_add(1);
                let stats = self.stats(unit.class);
                if unit.steps_since_damaged < stats.regen_delay {
                    return 0.0;
                }
                let gain = stats.shield_regen_rate.min(stats.max_shield - unit.shield).max(0.0);
                unit.shield += gain;
                gain
            })
            .collect()
    }

    /// Egocentric observation of ally `agent_index`.
    ///
    /// Layout: own block `[hp, shield, x, y, is_ranged]`, then one
    /// `[visible, dx, dy, hp, shield, is_ranged]` block per other ally and per
    /// enemy in index order, the three internal-state features, and a one-hot
    /// agent identity. Dead agents see zeros apart from their identity.
    pub fn observe(
        &self,
        state: &WorldState,
        agent_index: usize,
        internal_state: &InternalState<f64>,
    ) -> Vec<f64> {
        let cfg = &self.config;
        let mut obs = vec![0.0; cfg.obs_dim()];
        let n_allies = state.ally_units.len();
        obs[cfg.obs_dim() - n_allies + agent_index] = 1.0;
        let me = &state.ally_units[agent_index];
        if !me.alive {
            return obs;
        }
        let stats = self.stats(me.class);
        obs[0] = me.hp / stats.max_hp;
        obs[1] = shield_fraction(me.shield, stats.max_shield);
        obs[2] = norm_coord(me.position.0, state.grid_width);
        obs[3] = norm_coord(me.position.1, state.grid_height);
        obs[4] = is_ranged(me.class);

        let sight = stats.sight_range;
        let others = state
            .ally_units
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != agent_index)
            .map(|(_, u)| u)
            .chain(&state.enemy_units);
        for (slot, other) in others.enumerate() {
            let distance = chebyshev(me.position, other.position);
            if !other.alive || distance > sight {
                continue;
            }
            let base = OWN_FEATURES + slot * OTHER_FEATURES;
            let ostats = self.stats(other.class);
            obs[base] = 1.0;
            obs[base + 1] = (other.position.0 - me.position.0) as f64 / sight as f64;
            obs[base + 2] = (other.position.1 - me.position.1) as f64 / sight as f64;
            obs[base + 3] = other.hp / ostats.max_hp;
            obs[base + 4] = shield_fraction(other.shield, ostats.max_shield);
            obs[base + 5] = is_ranged(other.class);
        }
        let internal_base = cfg.obs_dim() - n_allies - 3;
        obs[internal_base..internal_base + 3].copy_from_slice(&internal_state.observation_features());
        obs
    }

    /// Centralized state: `[alive, hp, shield, x, y, is_ranged]` for every
    /// ally then every enemy (zeros for dead units), then the step fraction.
    pub fn global_state(&self, state: &WorldState) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.config.state_dim());
        for unit in state.ally_units.iter().chain(&state.enemy_units) {
            if !unit.alive {
                out.extend_from_slice(&[0.0; GLOBAL_UNIT_FEATURES]);
                continue;
            }
            let stats = self.stats(unit.class);
            out.extend_from_slice(&[
                1.0,
                unit.hp / stats.max_hp,
                shield_fraction(unit.shield, stats.max_shield),
                norm_coord(unit.position.0, state.grid_width),
                norm_coord(unit.position.1, state.grid_height),
                is_ranged(unit.class),
            ]);
        }
        out.push(state.step_count as f64 / state.episode_limit as f64);
        out
    }

    /// Current `(shield, hp)` fractions of ally `agent_index`.
    pub fn ally_fractions(&self, state: &WorldState, agent_index: usize) -> (f64, f64) {
        let unit = &state.ally_units[agent_index];
        let stats = self.stats(unit.class);
        (
            shield_fraction(unit.shield, stats.max_shield),
            unit.hp / stats.max_hp,
        )
    }

    /// Checks every structural invariant of a reachable state.
    pub fn check_invariants(&self, state: &WorldState) -> Result<()> {
        let fail = |msg: String| Err(Error::ContractViolation(msg));
        if state.step_count > state.episode_limit {
            return fail(format!(
                "step count {} exceeds limit {}",
                state.step_count, state.episode_limit
            ));
        }
        let mut cells = Vec::new();
        for unit in state.ally_units.iter().chain(&state.enemy_units) {
            let stats = self.stats(unit.class);
            if !(0.0..=stats.max_hp).contains(&unit.hp) || !(0.0..=stats.max_shield).contains(&unit.shield) {
                return fail(format!("unit out of bounds: {unit:?}"));
            }
            if unit.alive != (unit.hp > 0.0) {
                return fail(format!("alive flag inconsistent with hp: {unit:?}"));
            }
            if unit.alive {
                if !state.in_bounds(unit.position) {
                    return fail(format!("unit off grid: {unit:?}"));
                }
                if cells.contains(&unit.position) {
                    return fail(format!("two live units share {:?}", unit.position));
                }
                cells.push(unit.position);
            }
        }
        let allies = state.ally_units.iter().any(|u| u.alive);
        let enemies = state.enemy_units.iter().any(|u| u.alive);
        let expected = if !enemies {
            Outcome::Won
        } else if !allies {
            Outcome::Lost
        } else if state.step_count >= state.episode_limit {
            Outcome::Draw
        } else {
            Outcome::Ongoing
        };
        // A fresh state with an empty side cannot occur; reset validates sizes.
        if state.step_count > 0 && expected != state.outcome {
            return fail(format!(
                "outcome {} inconsistent with state (expected {expected})",
                state.outcome
            ));
        }
        Ok(())
    }
}

fn apply_damage(units: &mut [UnitState], damage: &[f64]) -> (Vec<UnitLoss>, usize) {
    let mut killed = 0;
    let losses = units
        .iter_mut()
        .zip(damage)
        .map(|(unit, &d)| {
            if !unit.alive || d <= 0.0 {
                return UnitLoss::default();
            }
            let shield_lost = unit.shield.min(d);
            unit.shield -= shield_lost;
            let hp_lost = unit.hp.min(d - shield_lost);
            unit.hp -= hp_lost;
            if unit.hp <= 0.0 {
                unit.hp = 0.0;
                unit.alive = false;
                killed += 1;
            }
            UnitLoss {
                shield_lost,
                hp_lost,
            }
        })
        .collect();
    (losses, killed)
}

fn shield_fraction(shield: f64, max_shield: f64) -> f64 {
    if max_shield > 0.0 {
        shield / max_shield
    } else {
        0.0
    }
}

fn norm_coord(v: i32, extent: u32) -> f64 {
    if extent > 1 {
        v as f64 / (extent - 1) as f64
    } else {
        0.0
    }
}

fn is_ranged(class: UnitClass) -> f64 {
    match class {
        UnitClass::Ranged => 1.0,
        UnitClass::Melee => 0.0,
    }
}

/// One line of an episode trace.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord<'a> {
    pub step: u32,
    pub ally_actions: &'a [usize],
    pub enemy_actions: &'a [usize],
    pub allies: &'a [UnitState],
    pub enemies: &'a [UnitState],
    pub events: &'a TransitionEvents,
}

/// Appends one JSON line describing a step to `out`.
pub fn write_trace_line<W: Write>(out: &mut W, record: &TraceRecord<'_>) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")
}
