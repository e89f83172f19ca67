//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::collections::{BTreeMap, BTreeSet};
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use netstate::canonical::{canonical_bytes, read_canonical};
use netstate::config::{LoadedDevice, Roles, RunConfig};
use netstate::experiments::{experiment1, experiment2, RoleSplit};
use netstate::pcap::{parse_pcap, write_session_pcaps, PcapError};
use netstate::report::OutputDir;
use netstate_core::conformance::{Aligner, CostScheme, Move};
use netstate_core::discovery::{inductive_miner, tree_to_petri, ProcessTree};
use netstate_core::eval::{
    build_pmf, compute_comp, compute_sep, compute_sim, pmf_cosine, pmf_intersection, roc_auc, Classification,
    FitnessMatrix,
};
use netstate_core::log::{Activity, EventLog};
use netstate_core::packet::{
    to_packet_records, ClientSpec, Direction, PacketRecord, RawTcpPacket, TcpFlags, Timestamp,
};
use netstate_core::petri::{Marking, PetriNet, TransitionId};
use netstate_core::state::StateId;
use netstate_core::synth::{generate_cohort, GameProfile, SyntheticDevice};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn close(a: f64, b: f64, tol: f64, what: &str) -> Result<(), String> {
    ensure((a - b).abs() <= tol, || format!("{what}: got {a}, expected {b}"))
}

// ---------------------------------------------------------------- 1

/// Minimum alignment cost by exhaustive search over model runs, carrying
/// the edit-distance row of the trace against each run's visible labels.
/// States `(marking, row)` are deduplicated; a branch is cut once every row
/// entry reaches the best complete cost found so far, or exceeds the cost of
/// skipping the whole trace and taking the shortest model run.
fn oracle_cost(net: &PetriNet, trace: &[Activity]) -> Option<u32> {
    let n = trace.len();
    let start_row: Vec<u32> = (0..=n as u32).collect();
    let bound = n as u32 + shortest_run(net)?;
    let mut best: Option<u32> = None;
    let mut seen: BTreeSet<(Marking, Vec<u32>)> = BTreeSet::new();
    let mut stack = vec![(net.initial_marking.clone(), start_row)];
    while let Some((m, row)) = stack.pop() {
        if !seen.insert((m.clone(), row.clone())) {
            continue;
        }
        let floor = row.iter().min().copied().unwrap_or(0);
        if floor > bound || best.is_some_and(|b| floor >= b) {
            continue;
        }
        if m == net.final_marking {
            best = Some(best.map_or(row[n], |b| b.min(row[n])));
        }
        for t in net.enabled(&m).expect("valid marking") {
            let next = net.fire(&m, t).expect("enabled");
            if next.total() > 16 {
                continue;
            }
            let row = match &net.transitions[t.0].label {
                None => row.clone(),
                Some(a) => {
                    let mut r = vec![row[0] + 1; n + 1];
                    for i in 1..=n {
                        let sync = if &trace[i - 1] == a { row[i - 1] } else { u32::MAX };
                        r[i] = (row[i] + 1).min(r[i - 1] + 1).min(sync);
                    }
                    r
                }
            };
            stack.push((next, row));
        }
    }
    best
}

/// Fewest visible transitions on any run to the final marking.
fn shortest_run(net: &PetriNet) -> Option<u32> {
    let mut dist: BTreeMap<Marking, u32> = BTreeMap::new();
    let mut queue = std::collections::VecDeque::from([(net.initial_marking.clone(), 0u32)]);
    while let Some((m, d)) = queue.pop_front() {
        if dist.get(&m).is_some_and(|old| *old <= d) {
            continue;
        }
        dist.insert(m.clone(), d);
        for t in net.enabled(&m).expect("valid marking") {
            let next = net.fire(&m, t).expect("enabled");
            if next.total() > 16 {
                continue;
            }
            match net.transitions[t.0].label {
                None => queue.push_front((next, d)),
                Some(_) => queue.push_back((next, d + 1)),
            }
        }
    }
    dist.get(&net.final_marking).copied()
}

/// Replays `moves` and returns their cost if they form a valid alignment.
fn replay(net: &PetriNet, trace: &[Activity], moves: &[Move]) -> Result<u32, String> {
    let (mut m, mut i, mut cost) = (net.initial_marking.clone(), 0, 0);
    let fire = |m: &Marking, t: TransitionId| -> Result<Marking, String> {
        if net.is_enabled(m, t).map_err(|e| e.to_string())? {
            net.fire(m, t).map_err(|e| e.to_string())
        } else {
            Err(format!("t{} not enabled", t.0))
        }
    };
    for mv in moves {
        match mv {
            Move::Sync { transition, label } => {
                ensure(trace.get(i) == Some(label), || "sync label disagrees with trace".into())?;
                ensure(net.transitions[transition.0].label.as_ref() == Some(label), || "sync label disagrees with net".into())?;
                m = fire(&m, *transition)?;
                i += 1;
            }
            Move::LogOnly { label } => {
                ensure(trace.get(i) == Some(label), || "log move out of order".into())?;
                i += 1;
                cost += 1;
            }
            Move::ModelOnly { transition, .. } => {
                ensure(net.transitions[transition.0].label.is_some(), || "model move on a silent transition".into())?;
                m = fire(&m, *transition)?;
                cost += 1;
            }
            Move::ModelSilent { transition } => {
                ensure(net.transitions[transition.0].label.is_none(), || "silent move on a visible transition".into())?;
                m = fire(&m, *transition)?;
            }
        }
    }
    ensure(i == trace.len(), || "trace not fully consumed".into())?;
    ensure(m == net.final_marking, || "final marking not reached".into())?;
    Ok(cost)
}

fn random_tree(rng: &mut ChaCha8Rng, depth: usize, labels: &[&str]) -> ProcessTree {
    if depth == 1 || rng.random_bool(0.3) {
        return if rng.random_bool(0.12) {
            ProcessTree::Silent
        } else {
            ProcessTree::activity(labels[rng.random_range(0..labels.len())])
        };
    }
    let arity = rng.random_range(2..=3);
    let children: Vec<ProcessTree> = (0..arity).map(|_| random_tree(rng, depth - 1, labels)).collect();
    match rng.random_range(0..4) {
        0 => ProcessTree::Sequence(children),
        1 => ProcessTree::Exclusive(children),
        2 => ProcessTree::Parallel(children),
        _ => ProcessTree::Loop(children),
    }
}

fn random_trace(rng: &mut ChaCha8Rng, max_len: usize, labels: &[&str]) -> Vec<Activity> {
    let len = rng.random_range(0..=max_len);
    (0..len).map(|_| Activity::from(labels[rng.random_range(0..labels.len())])).collect()
}

fn c1_alignment_oracle() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut instances = 0;
    let mut max_cost = 0;
    while instances < 50 {
        let tree = random_tree(&mut rng, 3, &["a", "b", "c", "d"]);
        let net = tree_to_petri(&tree);
        if net.transitions.len() > 8 {
            continue;
        }
        let trace = random_trace(&mut rng, 6, &["a", "b", "c", "d", "e"]);
        let expected = oracle_cost(&net, &trace).ok_or_else(|| format!("{tree}: oracle found no run"))?;
        let aligner = Aligner::new(&net, CostScheme::default()).map_err(|e| e.to_string())?;
        let al = aligner.align(&trace).map_err(|e| format!("{tree}: {e}"))?;
        let replayed = replay(&net, &trace, &al.moves).map_err(|e| format!("{tree} on {trace:?}: {e}"))?;
        ensure(al.total_cost == f64::from(expected) && replayed == expected, || {
            format!("{tree} on {trace:?}: search {} replay {replayed} oracle {expected}", al.total_cost)
        })?;
        max_cost = max_cost.max(expected);
        instances += 1;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:.2?}"))?;
    Ok(format!("{instances} instances exact, max cost {max_cost}, {elapsed:.2?}"))
}

// ---------------------------------------------------------------- 2

fn all_fit(net: &PetriNet, traces: &[Vec<Activity>]) -> Result<(), String> {
    let aligner = Aligner::new(net, CostScheme::default()).map_err(|e| e.to_string())?;
    for t in traces {
        let f = aligner.trace_fitness(t).map_err(|e| e.to_string())?;
        ensure(f == 1.0, || format!("trace {t:?} has fitness {f}"))?;
    }
    Ok(())
}

fn c2_miner_fitness() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let letters = ["a", "b", "c", "d", "e", "f"];
    let mut total = 0;
    for i in 0..30 {
        let alphabet = &letters[..rng.random_range(1..=6)];
        let traces: Vec<Vec<Activity>> = (0..rng.random_range(1..=50)).map(|_| random_trace(&mut rng, 7, alphabet)).collect();
        let log = EventLog::from_sequences(StateId(1), traces.iter().map(|t| t.iter().map(|a| a.as_str()).collect::<Vec<_>>()));
        let tree = inductive_miner(&log, 0.0);
        all_fit(&tree_to_petri(&tree), &traces).map_err(|e| format!("log {i}, tree {tree}: {e}"))?;
        total += traces.len();
    }
    Ok(format!("30 logs, {total} traces, all fitness 1.0"))
}

// ---------------------------------------------------------------- 3

/// Leaves, every operator over two leaves, tau variants, and every pair of
/// operators nested one level deep.
fn tree_enumeration() -> Vec<ProcessTree> {
    let ops = ["SEQ", "XOR", "PAR", "LOOP"];
    let mut out = vec!["a".to_string()];
    for op in ops {
        out.push(format!("{op}(a, b)"));
    }
    out.extend(["XOR(a, tau)", "LOOP(a, tau)", "LOOP(tau, a)"].map(String::from));
    for outer in ops {
        for inner in ops {
            out.push(format!("{outer}({inner}(a, b), c)"));
            out.push(format!("{outer}(c, {inner}(a, b))"));
        }
    }
    out.iter().map(|s| s.parse().expect("enumerated tree parses")).collect()
}

fn c3_rediscovery() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let trees = tree_enumeration();
    ensure(trees.iter().all(|t| t.depth() <= 3), || "tree deeper than 3".into())?;
    for tree in &trees {
        let traces: Vec<Vec<Activity>> = (0..60).map(|_| tree.sample_trace(&mut rng, 0.4, 3)).collect();
        let log = EventLog::from_sequences(StateId(1), traces.iter().map(|t| t.iter().map(|a| a.as_str()).collect::<Vec<_>>()));
        let mined = inductive_miner(&log, 0.0);
        all_fit(&tree_to_petri(&mined), &traces).map_err(|e| format!("{tree} re-mined as {mined}: {e}"))?;
    }
    Ok(format!("{} trees re-mined, every generated trace fits", trees.len()))
}

// ---------------------------------------------------------------- 4

fn c4_metric_fixtures() -> Check {
    let tol = 1e-9;
    let devices = vec!["d1".to_string(), "d2".to_string()];
    let s1 = StateId(1);
    let s2 = StateId(2);

    let mut f = FitnessMatrix::new();
    f.insert("d1", "d1", s1, s1, 0.8);
    f.insert("d1", "d2", s1, s1, 0.4);
    close(compute_sim(&f, &devices, &[s1]).map_err(|e| e.to_string())?.value, 2.0 / 3.0, tol, "sim")?;
    let mut same = FitnessMatrix::new();
    for di in &devices {
        for dj in &devices {
            same.insert(di, dj, s1, s1, 0.7);
        }
    }
    close(compute_sim(&same, &devices, &[s1]).map_err(|e| e.to_string())?.value, 1.0, tol, "sim identical")?;

    let mut g = FitnessMatrix::new();
    for (a, b) in [(s1, s2), (s2, s1)] {
        g.insert("d1", "d1", a, a, 0.9);
        g.insert("d1", "d1", a, b, 0.3);
    }
    close(compute_sep(&g, &devices[..1], &[s1, s2]).map_err(|e| e.to_string())?.value, 2.0, tol, "sep")?;
    let mut flat = FitnessMatrix::new();
    for (a, b) in [(s1, s2), (s2, s1)] {
        flat.insert("d1", "d1", a, a, 0.5);
        flat.insert("d1", "d1", a, b, 0.5);
    }
    close(compute_sep(&flat, &devices[..1], &[s1, s2]).map_err(|e| e.to_string())?.value, 0.0, tol, "sep equal")?;

    let seq = tree_to_petri(&"SEQ(a, b)".parse::<ProcessTree>().unwrap());
    let half = {
        // mean node degree 3 gives arc degree 1 / (1 + 1) = 0.5
        let mut n = PetriNet::new();
        let p = n.add_place("p");
        let q = n.add_place("q");
        let t = n.add_transition("t", Some(Activity::from("a")));
        let u = n.add_transition("u", Some(Activity::from("b")));
        for arc in [
            netstate_core::petri::Arc::Input(p, t),
            netstate_core::petri::Arc::Output(t, q),
            netstate_core::petri::Arc::Input(q, u),
            netstate_core::petri::Arc::Output(u, p),
            netstate_core::petri::Arc::Input(p, u),
            netstate_core::petri::Arc::Output(u, q),
        ] {
            n.add_arc(arc).unwrap();
        }
        n
    };
    close(seq.arc_degree().unwrap(), 1.0, tol, "sequential arc degree")?;
    close(half.arc_degree().unwrap(), 0.5, tol, "arc degree")?;
    close(compute_comp([&seq, &half]).map_err(|e| e.to_string())?, 0.25, tol, "comp")?;

    let pmf = build_pmf(
        &[Classification::Positive(s1), Classification::Positive(s1), Classification::Unknown, Classification::Positive(s2)],
        2,
    )
    .map_err(|e| e.to_string())?;
    close(pmf.state(s1), 0.5, tol, "pmf(1)")?;
    close(pmf.state(s2), 0.25, tol, "pmf(2)")?;
    close(pmf.unknown(), 0.25, tol, "pmf(unknown)")?;
    close(pmf_intersection(&pmf, &pmf).unwrap(), 1.0, tol, "I(P, P)")?;
    close(pmf_cosine(&pmf, &pmf).unwrap(), 1.0, tol, "cos(P, P)")?;
    let a = build_pmf(&[Classification::Positive(s1)], 2).unwrap();
    let b = build_pmf(&[Classification::Unknown], 2).unwrap();
    close(pmf_intersection(&a, &b).unwrap(), 0.0, tol, "I disjoint")?;
    close(pmf_cosine(&a, &b).unwrap(), 0.0, tol, "cos disjoint")?;

    let r = roc_auc(&[1.0; 5], &[0.0; 7]).unwrap();
    close(r.auc, 1.0, tol, "auc separated")?;
    let r = roc_auc(&[0.3; 5], &[0.3; 7]).unwrap();
    close(r.auc, 0.5, tol, "auc identical")?;
    let r = roc_auc(&[0.9, 0.4, 0.4, 0.1], &[0.4, 0.2, 0.0]).unwrap();
    close(r.auc, 9.0 / 12.0, tol, "auc ranks")?;
    close(r.trapezoid_area(), r.auc, 1e-12, "trapezoid vs rank")?;
    Ok("sim, sep, comp, PMF, intersection, cosine and AUC fixtures within 1e-9".into())
}

// ---------------------------------------------------------------- 5-9

const SESSIONS: usize = 4;
const PACKETS_PER_SESSION: usize = 5000;

fn loaded(devices: Vec<SyntheticDevice>) -> Vec<LoadedDevice> {
    devices
        .into_iter()
        .map(|d| LoadedDevice { id: d.spec.device_id, records: d.records, timestamp_regressions: 0, skipped_frames: 0 })
        .collect()
}

fn run_config(window_lengths: Vec<usize>, ks: Vec<usize>, seed: u64) -> RunConfig {
    RunConfig {
        devices: Vec::new(),
        window_lengths,
        ks,
        seed,
        noise_threshold: netstate_core::discovery::DEFAULT_NOISE_THRESHOLD,
        keep_fraction: 1.0,
        segment_fraction: 0.01,
        roles: Roles::default(),
        exp1_devices: Vec::new(),
        out: PathBuf::new(),
        workers: 0,
    }
}

fn classification(groups: &[(GameProfile, usize)], seed: u64, out: &OutputDir) -> Result<(f64, usize, usize, netstate::experiments::Exp2Result), String> {
    let devices = loaded(generate_cohort(groups, SESSIONS, PACKETS_PER_SESSION, seed).map_err(|e| e.to_string())?);
    let roles = RoleSplit { train: &devices[0], validation: &devices[1..4], test_own: &devices[4..8], test_foreign: &devices[8..] };
    let cfg = run_config(vec![3], vec![4], seed);
    let mut o = experiment2(&cfg, roles, out).map_err(|e| e.to_string())?;
    let r = o.cells.remove(0);
    Ok((r.cell.auc, r.cell.own_segments, r.cell.foreign_segments, r))
}

fn c5_separable(out: &OutputDir) -> Result<(String, netstate::experiments::Exp2Result, Vec<PacketRecord>), String> {
    let start = Instant::now();
    let groups = [(GameProfile::pushburst(), 8), (GameProfile::stream(), 4)];
    let (auc, own, foreign, r) = classification(&groups, 55, out)?;
    let elapsed = start.elapsed();
    let segments = own + foreign;
    ensure(auc >= 0.90, || format!("AUC {auc}"))?;
    ensure(segments >= 100, || format!("{segments} segments"))?;
    ensure(elapsed <= Duration::from_secs(300), || format!("took {elapsed:.2?}"))?;
    let train = generate_cohort(&groups[..1], SESSIONS, PACKETS_PER_SESSION, 55).map_err(|e| e.to_string())?.remove(0).records;
    Ok((format!("AUC {auc:.4} on {segments} segments ({own} own, {foreign} foreign), {elapsed:.2?}"), r, train))
}

fn c6_null(out: &OutputDir) -> Check {
    let groups = [(GameProfile::pushburst(), 8), (GameProfile::pushburst(), 4)];
    let (auc, own, foreign, _) = classification(&groups, 66, out)?;
    let segments = own + foreign;
    ensure((0.40..=0.60).contains(&auc), || format!("AUC {auc}"))?;
    ensure(segments >= 200, || format!("{segments} segments"))?;
    Ok(format!("AUC {auc:.4} on {segments} segments"))
}

fn c7_similarity(out: &OutputDir) -> Check {
    let devices = loaded(
        generate_cohort(&[(GameProfile::pushburst(), 4)], SESSIONS, PACKETS_PER_SESSION, 77).map_err(|e| e.to_string())?,
    );
    let cfg = run_config(vec![2, 3, 4], vec![2, 3], 77);
    let o = experiment1(&cfg, &devices, out).map_err(|e| e.to_string())?;
    ensure(o.cells.len() == 6, || format!("{} cells", o.cells.len()))?;
    for c in &o.cells {
        ensure(c.sim >= 0.90 && c.sep >= 0.0, || format!("WL {} k {}: sim {} sep {}", c.window_length, c.k, c.sim, c.sep))?;
    }
    let min_sim = o.cells.iter().map(|c| c.sim).fold(f64::INFINITY, f64::min);
    let min_sep = o.cells.iter().map(|c| c.sep).fold(f64::INFINITY, f64::min);
    Ok(format!("6 cells, min sim {min_sim:.4}, min sep {min_sep:.4}"))
}

fn contains_leaf(t: &ProcessTree, label: &str) -> bool {
    let mut found = false;
    t.walk(&mut |n| found |= matches!(n, ProcessTree::Activity(a) if a.as_str() == label));
    found
}

/// A SEQ child that is a LOOP over the client push, followed by a later SEQ
/// child containing the server push.
fn loop_then_push(tree: &ProcessTree) -> bool {
    let mut found = false;
    tree.walk(&mut |n| {
        if let ProcessTree::Sequence(children) = n {
            for (i, c) in children.iter().enumerate() {
                if matches!(c, ProcessTree::Loop(_)) && contains_leaf(c, "C_to_S_ACK+PSH") {
                    found |= children[i + 1..].iter().any(|later| contains_leaf(later, "S_to_C_ACK+PSH"));
                }
            }
        }
    });
    found
}

fn c8_push_loop(r: &netstate::experiments::Exp2Result, train: &[PacketRecord], out: &OutputDir) -> Check {
    let logs = r.model.preprocessing.state_logs("d1", train).map_err(|e| e.to_string())?;
    let (state, log) = logs.iter().max_by_key(|(s, l)| (l.len(), std::cmp::Reverse(**s))).ok_or("no states")?;
    let tree = &r.model.nets.get(state).ok_or("dominant state has no net")?.tree;
    out.write("dominant_state_tree.txt", format!("{state}\t{} traces\t{tree}\n", log.len()).as_bytes())
        .map_err(|e| e.to_string())?;
    ensure(loop_then_push(tree), || format!("state {state}: {tree}"))?;
    Ok(format!("state {state} ({} traces): {tree}", log.len()))
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).expect("readable dir") {
            let p = e.expect("dir entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn c9_determinism(first: &Path) -> Check {
    let second = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = OutputDir::new(second.path(), "acceptance");
    let (_, r, train) = c5_separable(&out.nested("c5"))?;
    c6_null(&out.nested("c6"))?;
    c7_similarity(&out.nested("c7"))?;
    c8_push_loop(&r, &train, &out.nested("c8"))?;
    let (a, b) = (files_under(first), files_under(second.path()));
    ensure(!a.is_empty(), || "first run wrote nothing".into())?;
    ensure(a.keys().eq(b.keys()), || "file sets differ".into())?;
    for (path, bytes) in &a {
        ensure(&b[path] == bytes, || format!("{} differs", path.display()))?;
    }
    Ok(format!("{} report files byte-identical across reruns", a.len()))
}

// ---------------------------------------------------------------- 10

fn pcap_header(big_endian: bool) -> Vec<u8> {
    let mut out = Vec::new();
    let u32b = |v: u32| if big_endian { v.to_be_bytes() } else { v.to_le_bytes() };
    let u16b = |v: u16| if big_endian { v.to_be_bytes() } else { v.to_le_bytes() };
    out.extend(u32b(0xa1b2c3d4));
    out.extend(u16b(2));
    out.extend(u16b(4));
    out.extend(u32b(0));
    out.extend(u32b(0));
    out.extend(u32b(65535));
    out.extend(u32b(1));
    out
}

fn pcap_record(big_endian: bool, secs: u32, micros: u32, frame: &[u8]) -> Vec<u8> {
    let u32b = |v: u32| if big_endian { v.to_be_bytes() } else { v.to_le_bytes() };
    let mut out = Vec::new();
    out.extend(u32b(secs));
    out.extend(u32b(micros));
    out.extend(u32b(frame.len() as u32));
    out.extend(u32b(frame.len() as u32));
    out.extend(frame);
    out
}

/// Ethernet II + IPv4 (no options) + TCP, written out byte by byte.
fn tcp_frame(total_len: u16, tcp_offset_words: u8, flags: u8, payload: usize) -> Vec<u8> {
    let mut f = vec![
        0x00, 0x11, 0x22, 0x33, 0x44, 0x55, // dst mac
        0x66, 0x77, 0x88, 0x99, 0xaa, 0xbb, // src mac
        0x08, 0x00, // IPv4
        0x45, 0x00, // version 4, IHL 5
    ];
    f.extend(total_len.to_be_bytes());
    f.extend([0x00, 0x01, 0x40, 0x00, 0x40, 0x06, 0x00, 0x00]); // id, DF, ttl 64, TCP, checksum
    f.extend([10, 0, 0, 5, 52, 1, 2, 3]);
    f.extend([0xc3, 0x50, 0x01, 0xbb]); // 50000 -> 443
    f.extend([0, 0, 0, 1, 0, 0, 0, 0]); // seq, ack
    f.extend([tcp_offset_words << 4, flags, 0xff, 0xff, 0, 0, 0, 0]);
    f.extend(std::iter::repeat_n(0x01, (usize::from(tcp_offset_words) - 5) * 4)); // options (NOP)
    f.extend(std::iter::repeat_n(0xab, payload));
    f
}

fn udp_frame() -> Vec<u8> {
    let mut f = vec![0x00, 0x11, 0x22, 0x33, 0x44, 0x55, 0x66, 0x77, 0x88, 0x99, 0xaa, 0xbb, 0x08, 0x00];
    f.extend([0x45, 0x00, 0x00, 0x1c, 0x00, 0x02, 0x00, 0x00, 0x40, 0x11, 0x00, 0x00]);
    f.extend([10, 0, 0, 5, 8, 8, 8, 8]);
    f.extend([0x30, 0x39, 0x00, 0x35, 0x00, 0x08, 0x00, 0x00]);
    f
}

fn arp_frame() -> Vec<u8> {
    let mut f = vec![0xff; 6];
    f.extend([0x66, 0x77, 0x88, 0x99, 0xaa, 0xbb, 0x08, 0x06]);
    f.extend([0u8; 28]);
    f
}

fn random_record(rng: &mut ChaCha8Rng) -> PacketRecord {
    let flags = TcpFlags::from_bits_truncate(rng.random_range(0..64));
    PacketRecord {
        timestamp: Timestamp::from_micros(rng.random_range(0..4_000_000_000_000_000)),
        direction: if rng.random_bool(0.5) { Direction::ClientToServer } else { Direction::ServerToClient },
        source_ip: Ipv4Addr::from(rng.random::<u32>()),
        source_port: rng.random(),
        destination_ip: Ipv4Addr::from(rng.random::<u32>()),
        destination_port: rng.random(),
        session_number: rng.random_range(1..=u32::MAX),
        flags,
        payload_size: if rng.random_bool(0.2) { rng.random() } else { rng.random_range(0..1500) },
    }
}

fn c10_ingest() -> Check {
    let expected = RawTcpPacket {
        timestamp: Timestamp::from_parts(1_700_000_000, 250_000),
        src_ip: Ipv4Addr::new(10, 0, 0, 5),
        src_port: 50000,
        dst_ip: Ipv4Addr::new(52, 1, 2, 3),
        dst_port: 443,
        flags: TcpFlags::SYN,
        payload_size: 0,
    };
    for be in [false, true] {
        let mut bytes = pcap_header(be);
        bytes.extend(pcap_record(be, 1_700_000_000, 250_000, &tcp_frame(40, 5, 0x02, 0)));
        let cap = parse_pcap(&bytes).map_err(|e| e.to_string())?;
        ensure(cap.packets == [expected] && cap.skipped == 0, || format!("single packet (big endian {be}): {cap:?}"))?;
        bytes.extend(pcap_record(be, 1_700_000_001, 0, &udp_frame()));
        let cap = parse_pcap(&bytes).map_err(|e| e.to_string())?;
        ensure(cap.packets == [expected] && cap.skipped == 1, || format!("with trailing UDP: {cap:?}"))?;
    }

    // TCP options and payload: total 40 + 12 + 7
    let mut bytes = pcap_header(false);
    bytes.extend(pcap_record(false, 5, 6, &arp_frame()));
    bytes.extend(pcap_record(false, 7, 8, &tcp_frame(59, 8, 0x18, 7)));
    let cap = parse_pcap(&bytes).map_err(|e| e.to_string())?;
    let p = cap.packets.first().ok_or("options fixture lost its packet")?;
    ensure(cap.skipped == 1 && cap.frames() == 2, || format!("ARP not skipped: {cap:?}"))?;
    ensure(p.payload_size == 7 && p.flags == TcpFlags::ACK | TcpFlags::PSH, || format!("options fixture: {p:?}"))?;
    let records = to_packet_records(&cap.packets, &"10.0.0.0/24".parse::<ClientSpec>().unwrap(), 3).map_err(|e| e.to_string())?;
    ensure(records[0].direction == Direction::ClientToServer && records[0].session_number == 3, || format!("{:?}", records[0]))?;

    let mut neg = pcap_header(false);
    neg.extend(pcap_record(false, 1, 0, &tcp_frame(30, 5, 0x02, 0)));
    ensure(matches!(parse_pcap(&neg), Err(PcapError::TruncatedRecord { .. })), || "negative payload accepted".into())?;
    let mut short = pcap_header(false);
    short.extend(pcap_record(false, 1, 0, &tcp_frame(40, 5, 0x02, 0)));
    short.truncate(short.len() - 3);
    ensure(matches!(parse_pcap(&short), Err(PcapError::TruncatedRecord { .. })), || "short record accepted".into())?;

    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let records: Vec<PacketRecord> = (0..10_000).map(|_| random_record(&mut rng)).collect();
    let back = read_canonical(&canonical_bytes(&records)[..]).map_err(|e| e.to_string())?;
    ensure(back == records, || "canonical CSV round trip differs".into())?;

    let device = generate_cohort(&[(GameProfile::stream(), 1)], 2, 3000, 9).map_err(|e| e.to_string())?.remove(0);
    let client = ClientSpec::Address(device.spec.client_ip);
    let mut replayed = Vec::new();
    for (s, bytes) in write_session_pcaps(&device.records) {
        let cap = parse_pcap(&bytes).map_err(|e| e.to_string())?;
        replayed.extend(to_packet_records(&cap.packets, &client, s).map_err(|e| e.to_string())?);
    }
    ensure(replayed == device.records, || "synthetic pcap round trip differs".into())?;
    Ok("pcap fixtures decode as expected; 10^4-record CSV and 6000-packet pcap round trips exact".into())
}

// ----------------------------------------------------------------

fn report(id: usize, name: &str, started: Instant, result: Check) -> bool {
    let took = started.elapsed();
    match result {
        Ok(detail) => {
            println!("PASS  [{id:>2}] {name}: {detail} [{took:.2?}]");
            true
        }
        Err(detail) => {
            println!("FAIL  [{id:>2}] {name}: {detail} [{took:.2?}]");
            false
        }
    }
}

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
    })
}

trait Nested {
    fn nested(&self, name: &str) -> OutputDir;
}

impl Nested for OutputDir {
    fn nested(&self, name: &str) -> OutputDir {
        OutputDir::new(self.path(name), "acceptance")
    }
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let out = OutputDir::new(dir.path(), "acceptance");
    let mut ok = true;
    let mut t = Instant::now();
    ok &= report(1, "alignment optimality vs exhaustive oracle", t, guarded(c1_alignment_oracle));
    t = Instant::now();
    ok &= report(2, "inductive miner fitness guarantee", t, guarded(c2_miner_fitness));
    t = Instant::now();
    ok &= report(3, "rediscovery of enumerated trees", t, guarded(c3_rediscovery));
    t = Instant::now();
    ok &= report(4, "metric fixtures", t, guarded(c4_metric_fixtures));
    t = Instant::now();
    let c5 = guarded(|| c5_separable(&out.nested("c5")));
    let (c5_line, c5_model) = match c5 {
        Ok((line, r, train)) => (Ok(line), Some((r, train))),
        Err(e) => (Err(e), None),
    };
    ok &= report(5, "synthetic classification, separable", t, c5_line);
    t = Instant::now();
    ok &= report(6, "synthetic classification, null case", t, guarded(|| c6_null(&out.nested("c6"))));
    t = Instant::now();
    ok &= report(7, "synthetic similarity grid", t, guarded(|| c7_similarity(&out.nested("c7"))));
    t = Instant::now();
    let c8 = match &c5_model {
        Some((r, train)) => guarded(|| c8_push_loop(r, train, &out.nested("c8"))),
        None => Err("separable run failed".into()),
    };
    ok &= report(8, "push-burst loop structure", t, c8);
    t = Instant::now();
    ok &= report(9, "determinism of reports", t, guarded(|| c9_determinism(dir.path())));
    t = Instant::now();
    ok &= report(10, "ingest fixtures and round trips", t, guarded(c10_ingest));
    if !ok {
        std::process::exit(1);
    }
}
