//! Networks of discrete-time switched linear subsystems.
//!
//! Each subsystem `i` evolves as
//! `x_i(k+1) = A_s x_i(k) + D_s w_i(k) + B_s u_i(k)`, `y_i(k) = C_s x_i(k)`
//! with `s = σ_i(k)`. The output vector is partitioned into row blocks keyed by
//! destination id (the block keyed by the node's own id is its external output)
//! and the internal input is partitioned into column blocks keyed by source
//! id. The wiring rule is `w_ij(k) = y_ji(k)`.
//!
//! Blocks are stored per mode, so a mode can change which neighbours a node
//! listens to. The mode-independent [`InterconnectionGraph`] is the union of
//! the per-mode wiring.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::ops::Range;

use thiserror::Error;

use crate::linalg::{Matrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    Output,
    Input,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("subsystem {node} has no modes")]
    NoModes { node: usize },
    #[error("subsystem {node} mode {mode}: {what} is {got:?}, expected {expected:?}")]
    ModeDims {
        node: usize,
        mode: usize,
        what: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("subsystem {node} mode {mode} contains a non-finite entry")]
    NotFinite { node: usize, mode: usize },
    #[error("subsystem {node} mode {mode}: {kind:?} blocks do not partition 0..{len} (gap or overlap at {at})")]
    BlockPartition {
        node: usize,
        mode: usize,
        kind: BlockKind,
        len: usize,
        at: usize,
    },
    #[error("subsystem {node} mode {mode}: duplicate {kind:?} block for peer {peer}")]
    DuplicateBlock {
        node: usize,
        mode: usize,
        kind: BlockKind,
        peer: usize,
    },
    #[error("subsystem {node} mode {mode} has no external output block")]
    MissingExternalOutput { node: usize, mode: usize },
    #[error("subsystem {node}: external output width differs between modes")]
    ExternalWidthChanges { node: usize },
    #[error("subsystem {node} lists itself as an internal input")]
    SelfLoop { node: usize },
    #[error("duplicate subsystem id {id}")]
    DuplicateId { id: usize },
    #[error("dangling edge {from} -> {to}: subsystem not found")]
    DanglingEdge { from: usize, to: usize },
    #[error("wiring inconsistency on edge {from} -> {to}")]
    WiringInconsistency { from: usize, to: usize },
    #[error(
        "edge {from} -> {to}: output block width {output_width} != input block width {input_width}"
    )]
    BlockWidthMismatch {
        from: usize,
        to: usize,
        output_width: usize,
        input_width: usize,
    },
    #[error("abstraction of subsystem {node} does not match: {detail}")]
    AbstractMismatch { node: usize, detail: &'static str },
    #[error("subsystem {node}: mode {mode} out of range (has {modes})")]
    ModeOutOfRange {
        node: usize,
        mode: usize,
        modes: usize,
    },
    #[error("switching signal does not cover step {step} (horizon {horizon})")]
    HorizonExceeded { step: usize, horizon: usize },
    #[error("subsystem {node}: {what} has length {got}, expected {expected}")]
    DimensionMismatch {
        node: usize,
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("subsystem {from} in mode {mode} has no output block for {to}")]
    OutputUnavailable { from: usize, to: usize, mode: usize },
    #[error("expected {expected} per-node entries, got {got}")]
    NodeCount { expected: usize, got: usize },
    #[error("invalid switching signal: {0}")]
    InvalidSwitching(&'static str),
}

/// A contiguous slice of an output (rows of `C`) or internal input (columns
/// of `D`) associated with a peer subsystem id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub peer: usize,
    pub range: Range<usize>,
}

impl Block {
    pub fn new(peer: usize, range: Range<usize>) -> Self {
        Self { peer, range }
    }

    pub fn width(&self) -> usize {
        self.range.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mode {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub d: Matrix,
    pub out_blocks: Vec<Block>,
    pub in_blocks: Vec<Block>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchedLinearSubsystem {
    pub id: usize,
    pub modes: Vec<Mode>,
}

/// Dimensions `(n, m, q, N)` shared by all modes of a subsystem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub state: usize,
    pub input: usize,
    pub output: usize,
    pub internal: usize,
}

impl SwitchedLinearSubsystem {
    pub fn dims(&self) -> Dims {
        let m = &self.modes[0];
        Dims {
            state: m.a.nrows(),
            input: m.b.ncols(),
            output: m.c.nrows(),
            internal: m.d.ncols(),
        }
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    pub fn external_block(&self, mode: usize) -> &Block {
        self.modes[mode]
            .out_blocks
            .iter()
            .find(|b| b.peer == self.id)
            .expect("validated subsystem has an external block")
    }

    pub fn out_block(&self, mode: usize, dest: usize) -> Option<&Block> {
        self.modes[mode].out_blocks.iter().find(|b| b.peer == dest)
    }

    /// Sources feeding this subsystem in `mode`.
    pub fn in_neighbors(&self, mode: usize) -> impl Iterator<Item = usize> + '_ {
        self.modes[mode].in_blocks.iter().map(|b| b.peer)
    }

    /// Checks per-mode dimensions and block partitions. Sorts blocks by start.
    pub fn validate(&mut self) -> Result<(), NetworkError> {
        let node = self.id;
        if self.modes.is_empty() {
            return Err(NetworkError::NoModes { node });
        }
        let first = &self.modes[0];
        let (n, m, q, nn) = (
            first.a.nrows(),
            first.b.ncols(),
            first.c.nrows(),
            first.d.ncols(),
        );
        let mut external_width = None;
        for (s, mode) in self.modes.iter_mut().enumerate() {
            let expect = [
                ("A", mode.a.shape(), (n, n)),
                ("B", mode.b.shape(), (n, m)),
                ("C", mode.c.shape(), (q, n)),
                ("D", mode.d.shape(), (n, nn)),
            ];
            for (what, got, expected) in expect {
                if got != expected {
                    return Err(NetworkError::ModeDims {
                        node,
                        mode: s,
                        what,
                        expected,
                        got,
                    });
                }
            }
            let finite = [&mode.a, &mode.b, &mode.c, &mode.d]
                .iter()
                .all(|mat| mat.iter().all(|v| v.is_finite()));
            if !finite {
                return Err(NetworkError::NotFinite { node, mode: s });
            }
            check_partition(node, s, BlockKind::Output, &mut mode.out_blocks, q)?;
            check_partition(node, s, BlockKind::Input, &mut mode.in_blocks, nn)?;
            if mode.in_blocks.iter().any(|b| b.peer == node) {
                return Err(NetworkError::SelfLoop { node });
            }
            let ext = mode
                .out_blocks
                .iter()
                .find(|b| b.peer == node)
                .ok_or(NetworkError::MissingExternalOutput { node, mode: s })?
                .width();
            match external_width {
                None => external_width = Some(ext),
                Some(w) if w != ext => return Err(NetworkError::ExternalWidthChanges { node }),
                _ => {}
            }
        }
        Ok(())
    }
}

fn check_partition(
    node: usize,
    mode: usize,
    kind: BlockKind,
    blocks: &mut [Block],
    len: usize,
) -> Result<(), NetworkError> {
    blocks.sort_by_key(|b| (b.range.start, b.range.end));
    let mut seen = BTreeSet::new();
    let mut at = 0;
    for b in blocks.iter() {
        if !seen.insert(b.peer) {
            return Err(NetworkError::DuplicateBlock {
                node,
                mode,
                kind,
                peer: b.peer,
            });
        }
        if b.range.start != at || b.range.end <= b.range.start {
            return Err(NetworkError::BlockPartition {
                node,
                mode,
                kind,
                len,
                at,
            });
        }
        at = b.range.end;
    }
    if at != len {
        return Err(NetworkError::BlockPartition {
            node,
            mode,
            kind,
            len,
            at,
        });
    }
    Ok(())
}

/// Union-over-modes neighbour sets `I_i` and `Ī_i`, keyed by subsystem id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InterconnectionGraph {
    pub nodes: Vec<usize>,
    pub in_neighbors: BTreeMap<usize, BTreeSet<usize>>,
    pub out_neighbors: BTreeMap<usize, BTreeSet<usize>>,
}

impl InterconnectionGraph {
    /// Edges `(j, i)` meaning `j` feeds `i`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, srcs) in &self.in_neighbors {
            for j in srcs {
                out.push((*j, *i));
            }
        }
        out.sort_unstable();
        out
    }

    pub fn in_degree(&self, id: usize) -> usize {
        self.in_neighbors.get(&id).map_or(0, BTreeSet::len)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Wire {
    source: usize,
    cols: Range<usize>,
}

/// A validated set of subsystems with resolved wiring.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    subsystems: Vec<SwitchedLinearSubsystem>,
    index: BTreeMap<usize, usize>,
    /// `wires[i][s]`: resolved internal inputs of node position `i` in mode `s`.
    wires: Vec<Vec<Vec<Wire>>>,
    graph: InterconnectionGraph,
}

impl Network {
    pub fn new(mut subsystems: Vec<SwitchedLinearSubsystem>) -> Result<Self, NetworkError> {
        let mut index = BTreeMap::new();
        for (pos, sub) in subsystems.iter_mut().enumerate() {
            sub.validate()?;
            if index.insert(sub.id, pos).is_some() {
                return Err(NetworkError::DuplicateId { id: sub.id });
            }
        }
        let mut graph = InterconnectionGraph {
            nodes: subsystems.iter().map(|s| s.id).collect(),
            ..Default::default()
        };
        for sub in &subsystems {
            graph.in_neighbors.entry(sub.id).or_default();
            graph.out_neighbors.entry(sub.id).or_default();
        }
        // Inputs: every source must exist, offer an output block to us in some
        // mode, and every such block must have the input's width.
        let mut wires = Vec::with_capacity(subsystems.len());
        for sub in &subsystems {
            let mut per_mode = Vec::with_capacity(sub.modes.len());
            for mode in &sub.modes {
                let mut list = Vec::with_capacity(mode.in_blocks.len());
                for blk in &mode.in_blocks {
                    let &src = index.get(&blk.peer).ok_or(NetworkError::DanglingEdge {
                        from: blk.peer,
                        to: sub.id,
                    })?;
                    let source = &subsystems[src];
                    let mut offered = false;
                    for s in 0..source.mode_count() {
                        if let Some(out) = source.out_block(s, sub.id) {
                            offered = true;
                            if out.width() != blk.width() {
                                return Err(NetworkError::BlockWidthMismatch {
                                    from: blk.peer,
                                    to: sub.id,
                                    output_width: out.width(),
                                    input_width: blk.width(),
                                });
                            }
                        }
                    }
                    if !offered {
                        return Err(NetworkError::WiringInconsistency {
                            from: blk.peer,
                            to: sub.id,
                        });
                    }
                    graph
                        .in_neighbors
                        .get_mut(&sub.id)
                        .unwrap()
                        .insert(blk.peer);
                    list.push(Wire {
                        source: src,
                        cols: blk.range.clone(),
                    });
                }
                per_mode.push(list);
            }
            wires.push(per_mode);
        }
        // Outputs: every destination must exist and listen to us in some mode.
        for sub in &subsystems {
            for mode in &sub.modes {
                for blk in mode.out_blocks.iter().filter(|b| b.peer != sub.id) {
                    let &dst = index.get(&blk.peer).ok_or(NetworkError::DanglingEdge {
                        from: sub.id,
                        to: blk.peer,
                    })?;
                    let dest = &subsystems[dst];
                    let listens = dest
                        .modes
                        .iter()
                        .any(|m| m.in_blocks.iter().any(|b| b.peer == sub.id));
                    if !listens {
                        return Err(NetworkError::WiringInconsistency {
                            from: sub.id,
                            to: blk.peer,
                        });
                    }
                    graph
                        .out_neighbors
                        .get_mut(&sub.id)
                        .unwrap()
                        .insert(blk.peer);
                }
            }
        }
        Ok(Self {
            subsystems,
            index,
            wires,
            graph,
        })
    }

    pub fn len(&self) -> usize {
        self.subsystems.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subsystems.is_empty()
    }

    pub fn subsystems(&self) -> &[SwitchedLinearSubsystem] {
        &self.subsystems
    }

    pub fn subsystem(&self, pos: usize) -> &SwitchedLinearSubsystem {
        &self.subsystems[pos]
    }

    pub fn position(&self, id: usize) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn graph(&self) -> &InterconnectionGraph {
        &self.graph
    }

    /// Positions of the nodes feeding `pos` in `mode`.
    pub fn sources_in_mode(&self, pos: usize, mode: usize) -> impl Iterator<Item = usize> + '_ {
        self.wires[pos][mode].iter().map(|w| w.source)
    }

    /// `true` when every node has the same number of modes.
    pub fn uniform_mode_count(&self) -> Option<usize> {
        let r = self.subsystems.first()?.mode_count();
        self.subsystems
            .iter()
            .all(|s| s.mode_count() == r)
            .then_some(r)
    }

    pub fn check_modes(&self, modes: &[usize]) -> Result<(), NetworkError> {
        self.check_count(modes.len())?;
        for (sub, &s) in self.subsystems.iter().zip(modes) {
            if s >= sub.mode_count() {
                return Err(NetworkError::ModeOutOfRange {
                    node: sub.id,
                    mode: s,
                    modes: sub.mode_count(),
                });
            }
        }
        Ok(())
    }

    fn check_count(&self, got: usize) -> Result<(), NetworkError> {
        if got != self.len() {
            return Err(NetworkError::NodeCount {
                expected: self.len(),
                got,
            });
        }
        Ok(())
    }

    fn check_vectors(
        &self,
        vs: &[Vector],
        what: &'static str,
        dim: impl Fn(Dims) -> usize,
    ) -> Result<(), NetworkError> {
        self.check_count(vs.len())?;
        for (sub, v) in self.subsystems.iter().zip(vs) {
            let expected = dim(sub.dims());
            if v.len() != expected {
                return Err(NetworkError::DimensionMismatch {
                    node: sub.id,
                    what,
                    expected,
                    got: v.len(),
                });
            }
        }
        Ok(())
    }

    /// Full outputs `y_i = C_{i,σ_i} x_i`.
    pub fn outputs(&self, states: &[Vector], modes: &[usize]) -> Result<Vec<Vector>, NetworkError> {
        self.check_modes(modes)?;
        self.check_vectors(states, "state", |d| d.state)?;
        Ok(self
            .subsystems
            .iter()
            .zip(states.iter().zip(modes))
            .map(|(sub, (x, &s))| &sub.modes[s].c * x)
            .collect())
    }

    /// External blocks `y_ii` of full outputs.
    pub fn external_outputs(&self, outputs: &[Vector], modes: &[usize]) -> Vec<Vector> {
        self.subsystems
            .iter()
            .zip(outputs.iter().zip(modes))
            .map(|(sub, (y, &s))| {
                let r = sub.external_block(s).range.clone();
                y.rows(r.start, r.len()).into_owned()
            })
            .collect()
    }

    /// Internal inputs `w_ij = y_ji` from precomputed full outputs.
    pub fn wire_outputs(
        &self,
        outputs: &[Vector],
        modes: &[usize],
    ) -> Result<Vec<Vector>, NetworkError> {
        let mut result = Vec::with_capacity(self.len());
        for (pos, sub) in self.subsystems.iter().enumerate() {
            let s = modes[pos];
            let mut w = Vector::zeros(sub.dims().internal);
            for wire in &self.wires[pos][s] {
                let src = &self.subsystems[wire.source];
                let src_mode = modes[wire.source];
                let blk =
                    src.out_block(src_mode, sub.id)
                        .ok_or(NetworkError::OutputUnavailable {
                            from: src.id,
                            to: sub.id,
                            mode: src_mode,
                        })?;
                let y = &outputs[wire.source];
                w.rows_mut(wire.cols.start, wire.cols.len())
                    .copy_from(&y.rows(blk.range.start, blk.range.len()));
            }
            result.push(w);
        }
        Ok(result)
    }

    /// Internal inputs assembled from the current states and modes.
    pub fn assemble_internal_input(
        &self,
        states: &[Vector],
        modes: &[usize],
    ) -> Result<Vec<Vector>, NetworkError> {
        let y = self.outputs(states, modes)?;
        self.wire_outputs(&y, modes)
    }

    /// One synchronous step with explicit per-node modes.
    pub fn step_with_modes(
        &self,
        states: &[Vector],
        inputs: &[Vector],
        modes: &[usize],
    ) -> Result<StepOutput, NetworkError> {
        let outputs = self.outputs(states, modes)?;
        self.check_vectors(inputs, "input", |d| d.input)?;
        let internal = self.wire_outputs(&outputs, modes)?;
        let next_states = self.advance(states, inputs, &internal, modes);
        let external = self.external_outputs(&outputs, modes);
        Ok(StepOutput {
            next_states,
            outputs,
            external,
        })
    }

    /// One step with modes taken from `switching` at time `k`.
    pub fn step(
        &self,
        states: &[Vector],
        inputs: &[Vector],
        switching: &SwitchingSignal,
        k: usize,
    ) -> Result<StepOutput, NetworkError> {
        let modes = switching.modes_at(k, self)?;
        self.step_with_modes(states, inputs, &modes)
    }

    /// `x⁺ = A x + D w + B u` with caller-supplied internal inputs.
    pub fn advance(
        &self,
        states: &[Vector],
        inputs: &[Vector],
        internal: &[Vector],
        modes: &[usize],
    ) -> Vec<Vector> {
        self.subsystems
            .iter()
            .enumerate()
            .map(|(pos, sub)| {
                let m = &sub.modes[modes[pos]];
                &m.a * &states[pos] + &m.d * &internal[pos] + &m.b * &inputs[pos]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub next_states: Vec<Vector>,
    /// Full outputs `y_i(k)`.
    pub outputs: Vec<Vector>,
    /// External outputs `y_ii(k)`.
    pub external: Vec<Vector>,
}

/// Per-node switching signal `σ_i : ℕ₀ → S_i`.
#[derive(Debug, Clone, PartialEq)]
pub enum SwitchingSignal {
    /// `table[k][pos]` is the mode of node position `pos` at step `k`.
    Table(Vec<Vec<usize>>),
    /// All nodes follow `schedule[(k / period) % schedule.len()]`.
    Periodic { period: usize, schedule: Vec<usize> },
    /// Independent periodic rule per node position.
    PerNode(Vec<(usize, Vec<usize>)>),
}

impl SwitchingSignal {
    /// Synchronized switching cycling through modes `0..modes` every `period` steps.
    pub fn cycling(period: usize, modes: usize) -> Self {
        Self::Periodic {
            period,
            schedule: (0..modes).collect(),
        }
    }

    pub fn constant(mode: usize) -> Self {
        Self::Periodic {
            period: 1,
            schedule: alloc::vec![mode],
        }
    }

    fn periodic_mode(k: usize, period: usize, schedule: &[usize]) -> Result<usize, NetworkError> {
        if period == 0 || schedule.is_empty() {
            return Err(NetworkError::InvalidSwitching(
                "period and schedule must be nonempty",
            ));
        }
        Ok(schedule[(k / period) % schedule.len()])
    }

    /// Modes of every node at step `k`, validated against the network.
    pub fn modes_at(&self, k: usize, network: &Network) -> Result<Vec<usize>, NetworkError> {
        let modes = match self {
            Self::Table(rows) => rows.get(k).cloned().ok_or(NetworkError::HorizonExceeded {
                step: k,
                horizon: rows.len(),
            })?,
            Self::Periodic { period, schedule } => {
                let s = Self::periodic_mode(k, *period, schedule)?;
                alloc::vec![s; network.len()]
            }
            Self::PerNode(rules) => rules
                .iter()
                .map(|(period, schedule)| Self::periodic_mode(k, *period, schedule))
                .collect::<Result<_, _>>()?,
        };
        network.check_modes(&modes)?;
        Ok(modes)
    }

    /// Number of steps covered, `None` when unbounded.
    pub fn horizon(&self) -> Option<usize> {
        match self {
            Self::Table(rows) => Some(rows.len()),
            _ => None,
        }
    }
}

/// A concrete network, its interconnection graph and an optional index-aligned
/// abstraction with identical output and internal-input partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub concrete: Network,
    pub abstraction: Option<Network>,
}

impl NetworkSpec {
    /// Validates both networks, the declared edge list `(j, i)` (`j` feeds `i`)
    /// against the block wiring, and the concrete/abstract pairing.
    pub fn new(
        subsystems: Vec<SwitchedLinearSubsystem>,
        edges: &[(usize, usize)],
        abstract_subsystems: Option<Vec<SwitchedLinearSubsystem>>,
    ) -> Result<Self, NetworkError> {
        let concrete = Network::new(subsystems)?;
        for &(from, to) in edges {
            if concrete.position(from).is_none() || concrete.position(to).is_none() {
                return Err(NetworkError::DanglingEdge { from, to });
            }
        }
        let declared: BTreeSet<(usize, usize)> = edges.iter().copied().collect();
        let wired: BTreeSet<(usize, usize)> = concrete.graph().edges().into_iter().collect();
        if let Some(&(from, to)) = declared.symmetric_difference(&wired).next() {
            return Err(NetworkError::WiringInconsistency { from, to });
        }
        let abstraction = match abstract_subsystems {
            None => None,
            Some(subs) => {
                let net = Network::new(subs)?;
                check_pairing(&concrete, &net)?;
                Some(net)
            }
        };
        Ok(Self {
            concrete,
            abstraction,
        })
    }

    pub fn graph(&self) -> &InterconnectionGraph {
        self.concrete.graph()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.graph().edges()
    }
}

fn check_pairing(concrete: &Network, abstraction: &Network) -> Result<(), NetworkError> {
    if concrete.len() != abstraction.len() {
        return Err(NetworkError::NodeCount {
            expected: concrete.len(),
            got: abstraction.len(),
        });
    }
    for (c, a) in concrete.subsystems().iter().zip(abstraction.subsystems()) {
        let node = c.id;
        if c.id != a.id {
            return Err(NetworkError::AbstractMismatch {
                node,
                detail: "ids are not index-aligned",
            });
        }
        if c.mode_count() != a.mode_count() {
            return Err(NetworkError::AbstractMismatch {
                node,
                detail: "mode counts differ",
            });
        }
        for (cm, am) in c.modes.iter().zip(&a.modes) {
            if cm.out_blocks != am.out_blocks {
                return Err(NetworkError::AbstractMismatch {
                    node,
                    detail: "output blocks differ",
                });
            }
            if cm.in_blocks != am.in_blocks {
                return Err(NetworkError::AbstractMismatch {
                    node,
                    detail: "internal input blocks differ",
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn scalar_sub(
        id: usize,
        a: f64,
        inputs: &[usize],
        outputs: &[usize],
    ) -> SwitchedLinearSubsystem {
        let q = 1 + outputs.len();
        let nn = inputs.len();
        let mut out_blocks = vec![Block::new(id, 0..1)];
        out_blocks.extend(
            outputs
                .iter()
                .enumerate()
                .map(|(k, &d)| Block::new(d, k + 1..k + 2)),
        );
        SwitchedLinearSubsystem {
            id,
            modes: vec![Mode {
                a: Matrix::from_element(1, 1, a),
                b: Matrix::from_element(1, 1, 1.0),
                c: Matrix::from_element(q, 1, 1.0),
                d: Matrix::from_element(1, nn, 1.0),
                out_blocks,
                in_blocks: inputs
                    .iter()
                    .enumerate()
                    .map(|(k, &s)| Block::new(s, k..k + 1))
                    .collect(),
            }],
        }
    }

    #[test]
    fn single_node_is_valid() {
        let spec = NetworkSpec::new(vec![scalar_sub(0, 0.5, &[], &[])], &[], None).unwrap();
        assert_eq!(spec.concrete.len(), 1);
        assert!(spec.edges().is_empty());
    }

    #[test]
    fn chain_wires_outputs() {
        // Node 1 feeds node 0 through an identity block.
        let subs = vec![scalar_sub(0, 0.0, &[1], &[]), scalar_sub(1, 0.0, &[], &[0])];
        let spec = NetworkSpec::new(subs, &[(1, 0)], None).unwrap();
        let states = vec![Vector::from_element(1, 0.0), Vector::from_element(1, 1.0)];
        let w = spec
            .concrete
            .assemble_internal_input(&states, &[0, 0])
            .unwrap();
        assert_eq!(w[0].as_slice(), &[1.0]);
        assert_eq!(w[1].len(), 0);
        let zeros = vec![Vector::zeros(1), Vector::zeros(1)];
        let w = spec
            .concrete
            .assemble_internal_input(&zeros, &[0, 0])
            .unwrap();
        assert!(w.iter().all(|v| v.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn rejects_inconsistent_edges() {
        let subs = vec![scalar_sub(0, 0.0, &[1], &[]), scalar_sub(1, 0.0, &[], &[0])];
        let err = NetworkSpec::new(subs.clone(), &[], None).unwrap_err();
        assert_eq!(err, NetworkError::WiringInconsistency { from: 1, to: 0 });
        let err = NetworkSpec::new(subs, &[(1, 0), (0, 1)], None).unwrap_err();
        assert_eq!(err, NetworkError::WiringInconsistency { from: 0, to: 1 });
        // Node 0 listens to 1 but 1 never outputs to 0.
        let subs = vec![scalar_sub(0, 0.0, &[1], &[]), scalar_sub(1, 0.0, &[], &[])];
        assert_eq!(
            NetworkSpec::new(subs, &[(1, 0)], None).unwrap_err(),
            NetworkError::WiringInconsistency { from: 1, to: 0 }
        );
        let subs = vec![scalar_sub(0, 0.0, &[7], &[])];
        assert_eq!(
            Network::new(subs).unwrap_err(),
            NetworkError::DanglingEdge { from: 7, to: 0 }
        );
    }

    #[test]
    fn rejects_block_gaps_and_self_loops() {
        let mut sub = scalar_sub(0, 0.0, &[], &[]);
        sub.modes[0].out_blocks = vec![Block::new(0, 1..2)];
        sub.modes[0].c = Matrix::zeros(2, 1);
        assert!(matches!(
            Network::new(vec![sub]),
            Err(NetworkError::BlockPartition {
                kind: BlockKind::Output,
                at: 0,
                ..
            })
        ));
        let sub = scalar_sub(0, 0.0, &[0], &[]);
        assert_eq!(
            Network::new(vec![sub]).unwrap_err(),
            NetworkError::SelfLoop { node: 0 }
        );
    }

    #[test]
    fn rejects_width_mismatch() {
        let mut src = scalar_sub(1, 0.0, &[], &[0]);
        src.modes[0].c = Matrix::zeros(3, 1);
        src.modes[0].out_blocks[1].range = 1..3;
        let subs = vec![scalar_sub(0, 0.0, &[1], &[]), src];
        assert_eq!(
            Network::new(subs).unwrap_err(),
            NetworkError::BlockWidthMismatch {
                from: 1,
                to: 0,
                output_width: 2,
                input_width: 1
            }
        );
    }

    #[test]
    fn identity_dynamics_keep_states() {
        let mut sub = scalar_sub(0, 1.0, &[], &[]);
        sub.modes[0].b = Matrix::zeros(1, 1);
        let net = Network::new(vec![sub]).unwrap();
        let x = vec![Vector::from_element(1, 3.5)];
        let out = net
            .step(
                &x,
                &[Vector::from_element(1, 9.0)],
                &SwitchingSignal::constant(0),
                0,
            )
            .unwrap();
        assert_eq!(out.next_states, x);
        assert_eq!(out.external[0].as_slice(), &[3.5]);
    }

    #[test]
    fn switching_signals() {
        let net = Network::new(vec![scalar_sub(0, 0.0, &[], &[])]).unwrap();
        let table = SwitchingSignal::Table(vec![vec![0], vec![0]]);
        assert_eq!(table.modes_at(1, &net).unwrap(), vec![0]);
        assert_eq!(
            table.modes_at(2, &net).unwrap_err(),
            NetworkError::HorizonExceeded {
                step: 2,
                horizon: 2
            }
        );
        let bad = SwitchingSignal::constant(1);
        assert!(matches!(
            bad.modes_at(0, &net),
            Err(NetworkError::ModeOutOfRange { .. })
        ));
        let cyc = SwitchingSignal::cycling(5, 2);
        let schedule: Vec<usize> = (0..12)
            .map(|k| match &cyc {
                SwitchingSignal::Periodic { period, schedule } => {
                    schedule[(k / period) % schedule.len()]
                }
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(schedule, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 0, 0]);
    }

    #[test]
    fn dimension_errors_name_the_node() {
        let net = Network::new(vec![scalar_sub(4, 0.0, &[], &[])]).unwrap();
        let err = net
            .step_with_modes(&[Vector::zeros(2)], &[Vector::zeros(1)], &[0])
            .unwrap_err();
        assert_eq!(
            err,
            NetworkError::DimensionMismatch {
                node: 4,
                what: "state",
                expected: 1,
                got: 2
            }
        );
    }
}
