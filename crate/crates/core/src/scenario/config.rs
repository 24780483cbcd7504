//! Scenario file format.
//!
//! ```text
//! # comment
//! [sim]
//! end 50
//! seed 7
//! [nodes]
//! count 3
//! [links]
//! 1 2 10000000 0.010          # a b bandwidth_bps prop_delay_s
//! [routes]
//! 1 3 2                       # node dst next_hop
//! [generators]
//! 1 EXP_ON_OFF 1 3 512 64000 1.2 0.8 5.0 policer_rate=64000 policer_bucket=1024
//! [lsps]
//! 1 1 3 0 1 2 3 optional      # id ingress egress bw route...
//! [backups]
//! 2 1 1 3 1 3                 # id protects merge_start merge_end route...
//! [failures]
//! 2 3 10.029 15               # a b fail_at restore_at (or -)
//! [timers]
//! hello_interval 0.005
//! ```
//!
//! Generator `on_mean`/`off_mean` may be `-` for kinds that do not use them.
//! Extra generator settings are `key=value` pairs: `shape`, `scale`,
//! `policer_rate`, `policer_bucket`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::ids::{GeneratorId, LspId, NodeId};
use crate::mplsctl::{BackupSpec, LspSpec, Timers};
use crate::netshell::{GeneratorKind, GeneratorSpec, PolicerSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkSpec {
    pub a: NodeId,
    pub b: NodeId,
    pub bandwidth: f64,
    pub prop_delay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RouteSpec {
    pub node: NodeId,
    pub dst: NodeId,
    pub next_hop: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailureSpec {
    pub a: NodeId,
    pub b: NodeId,
    pub fail_at: f64,
    pub restore_at: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub end: f64,
    pub seed: u64,
    pub nodes: u32,
    pub links: Vec<LinkSpec>,
    pub routes: Vec<RouteSpec>,
    pub generators: Vec<GeneratorSpec>,
    pub lsps: Vec<LspSpec>,
    pub backups: Vec<BackupSpec>,
    pub failures: Vec<FailureSpec>,
    pub timers: Timers,
}

/// One problem found in a scenario file. `line` is 1-based; 0 means the
/// problem is not tied to a single line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            f.write_str(&self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ScenarioError {
    pub errors: Vec<ParseError>,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.errors.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Section {
    Sim,
    Nodes,
    Links,
    Routes,
    Generators,
    Lsps,
    Backups,
    Failures,
    Timers,
}

impl Section {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sim" => Section::Sim,
            "nodes" => Section::Nodes,
            "links" => Section::Links,
            "routes" => Section::Routes,
            "generators" => Section::Generators,
            "lsps" => Section::Lsps,
            "backups" => Section::Backups,
            "failures" => Section::Failures,
            "timers" => Section::Timers,
            _ => return None,
        })
    }
}

struct Parser {
    errors: Vec<ParseError>,
    line: usize,
}

impl Parser {
    fn error(&mut self, message: impl Into<String>) {
        self.errors.push(ParseError {
            line: self.line,
            message: message.into(),
        });
    }

    fn value<T: FromStr>(&mut self, field: &str, token: &str) -> Option<T> {
        match token.parse::<T>() {
            Ok(v) => Some(v),
            Err(_) => {
                self.error(format!("invalid {field} {token:?}"));
                None
            }
        }
    }

    fn number(&mut self, field: &str, token: &str) -> Option<f64> {
        let v: f64 = self.value(field, token)?;
        if v.is_finite() {
            Some(v)
        } else {
            self.error(format!("{field} must be finite, got {token}"));
            None
        }
    }

    fn node(&mut self, field: &str, token: &str) -> Option<NodeId> {
        self.value::<u32>(field, token).map(NodeId)
    }

    fn optional(&mut self, field: &str, token: &str) -> Option<Option<f64>> {
        if token == "-" {
            Some(None)
        } else {
            self.number(field, token).map(Some)
        }
    }

    fn arity(&mut self, fields: &[&str], min: usize, what: &str) -> bool {
        if fields.len() < min {
            self.error(format!("{what} needs at least {min} fields, got {}", fields.len()));
            false
        } else {
            true
        }
    }
}

pub fn parse(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let mut p = Parser {
        errors: Vec::new(),
        line: 0,
    };
    let mut section = None;
    let mut seen_sections = BTreeSet::new();
    let mut end = None;
    let mut seed = None;
    let mut nodes = None;
    let mut timers = Timers::default();
    let mut links = Vec::new();
    let mut routes = Vec::new();
    let mut generators = Vec::new();
    let mut lsps = Vec::new();
    let mut backups = Vec::new();
    let mut failures = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        p.line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            match Section::from_name(name.trim()) {
                Some(s) => {
                    if !seen_sections.insert(s) {
                        p.error(format!("section [{name}] appears twice"));
                    }
                    section = Some(s);
                }
                None => {
                    p.error(format!("unknown section [{name}]"));
                    section = None;
                }
            }
            continue;
        }
        let f: Vec<&str> = content.split_whitespace().collect();
        let Some(current) = section else {
            p.error("entry outside of a known section");
            continue;
        };
        match current {
            Section::Sim => {
                if f.len() != 2 {
                    p.error("expected `key value`");
                    continue;
                }
                match f[0] {
                    "end" => end = p.number("end", f[1]).or(end),
                    "seed" => seed = p.value::<u64>("seed", f[1]).or(seed),
                    other => p.error(format!("unknown [sim] key {other:?}")),
                }
            }
            Section::Nodes => {
                if f.len() != 2 || f[0] != "count" {
                    p.error("expected `count N`");
                    continue;
                }
                nodes = p.value::<u32>("node count", f[1]).or(nodes);
            }
            Section::Timers => {
                if f.len() != 2 {
                    p.error("expected `key value`");
                    continue;
                }
                if let Err(e) = timers.set(f[0], f[1]) {
                    p.error(e);
                }
            }
            Section::Links => {
                if f.len() != 4 {
                    p.error("expected `a b bandwidth_bps prop_delay_s`");
                    continue;
                }
                let (Some(a), Some(b), Some(bandwidth), Some(prop_delay)) = (
                    p.node("node", f[0]),
                    p.node("node", f[1]),
                    p.number("bandwidth", f[2]),
                    p.number("delay", f[3]),
                ) else {
                    continue;
                };
                links.push((
                    p.line,
                    LinkSpec {
                        a,
                        b,
                        bandwidth,
                        prop_delay,
                    },
                ));
            }
            Section::Routes => {
                if f.len() != 3 {
                    p.error("expected `node dst next_hop`");
                    continue;
                }
                let (Some(node), Some(dst), Some(next_hop)) = (
                    p.node("node", f[0]),
                    p.node("destination", f[1]),
                    p.node("next hop", f[2]),
                ) else {
                    continue;
                };
                routes.push((p.line, RouteSpec { node, dst, next_hop }));
            }
            Section::Generators => {
                if !p.arity(&f, 9, "generator") {
                    continue;
                }
                let kind = match GeneratorKind::from_str(f[1]) {
                    Ok(k) => k,
                    Err(e) => {
                        p.error(e);
                        continue;
                    }
                };
                let (
                    Some(id),
                    Some(node),
                    Some(dst),
                    Some(packet_size),
                    Some(rate),
                    Some(on_mean),
                    Some(off_mean),
                    Some(start),
                ) = (
                    p.value::<u32>("generator id", f[0]),
                    p.node("node", f[2]),
                    p.node("destination", f[3]),
                    p.value::<u32>("packet size", f[4]),
                    p.number("rate", f[5]),
                    p.optional("on_mean", f[6]),
                    p.optional("off_mean", f[7]),
                    p.number("start", f[8]),
                )
                else {
                    continue;
                };
                let mut spec = GeneratorSpec {
                    id: GeneratorId(id),
                    kind,
                    node,
                    dst,
                    packet_size,
                    rate,
                    on_mean,
                    off_mean,
                    pareto_shape: None,
                    pareto_scale: None,
                    start,
                    policer: None,
                };
                let mut policer_rate = None;
                let mut policer_bucket = None;
                for extra in &f[9..] {
                    let Some((key, value)) = extra.split_once('=') else {
                        p.error(format!("expected key=value, got {extra:?}"));
                        continue;
                    };
                    let v = p.number(key, value);
                    match key {
                        "shape" => spec.pareto_shape = v,
                        "scale" => spec.pareto_scale = v,
                        "policer_rate" => policer_rate = v,
                        "policer_bucket" => policer_bucket = v,
                        other => p.error(format!("unknown generator key {other:?}")),
                    }
                }
                match (policer_rate, policer_bucket) {
                    (Some(rate), Some(bucket_size)) => {
                        spec.policer = Some(PolicerSpec { rate, bucket_size })
                    }
                    (None, None) => {}
                    _ => p.error("policer needs both policer_rate and policer_bucket"),
                }
                generators.push((p.line, spec));
            }
            Section::Lsps => {
                if !p.arity(&f, 6, "lsp") {
                    continue;
                }
                let (optional, route_fields) = match f.last() {
                    Some(&"optional") => (true, &f[4..f.len() - 1]),
                    _ => (false, &f[4..]),
                };
                let route: Option<Vec<NodeId>> =
                    route_fields.iter().map(|t| p.node("route node", t)).collect();
                let (Some(id), Some(ingress), Some(egress), Some(bandwidth), Some(route)) = (
                    p.value::<u32>("lsp id", f[0]),
                    p.node("ingress", f[1]),
                    p.node("egress", f[2]),
                    p.number("bandwidth", f[3]),
                    route,
                ) else {
                    continue;
                };
                lsps.push((
                    p.line,
                    LspSpec {
                        id: LspId(id),
                        ingress,
                        egress,
                        bandwidth,
                        route,
                        optional,
                    },
                ));
            }
            Section::Backups => {
                if !p.arity(&f, 6, "backup") {
                    continue;
                }
                let route: Option<Vec<NodeId>> =
                    f[4..].iter().map(|t| p.node("route node", t)).collect();
                let (Some(id), Some(protects), Some(merge_start), Some(merge_end), Some(route)) = (
                    p.value::<u32>("backup id", f[0]),
                    p.value::<u32>("protected lsp", f[1]),
                    p.node("merge_start", f[2]),
                    p.node("merge_end", f[3]),
                    route,
                ) else {
                    continue;
                };
                backups.push((
                    p.line,
                    BackupSpec {
                        id: LspId(id),
                        protects: LspId(protects),
                        merge_start,
                        merge_end,
                        route,
                    },
                ));
            }
            Section::Failures => {
                if f.len() != 4 {
                    p.error("expected `a b fail_at restore_at`");
                    continue;
                }
                let (Some(a), Some(b), Some(fail_at), Some(restore_at)) = (
                    p.node("node", f[0]),
                    p.node("node", f[1]),
                    p.number("fail_at", f[2]),
                    p.optional("restore_at", f[3]),
                ) else {
                    continue;
                };
                failures.push((
                    p.line,
                    FailureSpec {
                        a,
                        b,
                        fail_at,
                        restore_at,
                    },
                ));
            }
        }
    }

    let Some(nodes) = nodes.filter(|n| *n > 0) else {
        p.line = 0;
        p.error("no nodes");
        return Err(ScenarioError { errors: p.errors });
    };

    let config = ScenarioConfig {
        end: end.unwrap_or(0.0),
        seed: seed.unwrap_or(0),
        nodes,
        links: links.iter().map(|(_, l)| *l).collect(),
        routes: routes.iter().map(|(_, r)| *r).collect(),
        generators: generators.iter().map(|(_, g)| g.clone()).collect(),
        lsps: lsps.iter().map(|(_, l)| l.clone()).collect(),
        backups: backups.iter().map(|(_, b)| b.clone()).collect(),
        failures: failures.iter().map(|(_, f)| *f).collect(),
        timers,
    };
    let lines = Lines {
        links: links.iter().map(|(l, _)| *l).collect(),
        routes: routes.iter().map(|(l, _)| *l).collect(),
        generators: generators.iter().map(|(l, _)| *l).collect(),
        lsps: lsps.iter().map(|(l, _)| *l).collect(),
        backups: backups.iter().map(|(l, _)| *l).collect(),
        failures: failures.iter().map(|(l, _)| *l).collect(),
    };
    if end.is_none() {
        p.errors.push(ParseError {
            line: 0,
            message: "missing `end` in [sim]".into(),
        });
    }
    p.errors.extend(config.check(&lines));
    if p.errors.is_empty() {
        Ok(config)
    } else {
        p.errors.sort_by_key(|e| e.line);
        Err(ScenarioError { errors: p.errors })
    }
}

/// Source line of every list item, for anchoring validation errors.
#[derive(Debug, Default)]
struct Lines {
    links: Vec<usize>,
    routes: Vec<usize>,
    generators: Vec<usize>,
    lsps: Vec<usize>,
    backups: Vec<usize>,
    failures: Vec<usize>,
}

impl ScenarioConfig {
    /// Semantic checks: every reference resolves and every value is in range.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let errors = self.check(&Lines::default());
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ScenarioError { errors })
        }
    }

    fn check(&self, lines: &Lines) -> Vec<ParseError> {
        let mut errors = Vec::new();
        let mut err = |line: Option<&usize>, message: String| {
            errors.push(ParseError {
                line: line.copied().unwrap_or(0),
                message,
            });
        };
        if self.nodes == 0 {
            err(None, "no nodes".into());
        }
        if !(self.end.is_finite() && self.end > 0.0) {
            err(None, format!("simulation end must be positive, got {}", self.end));
        }
        if let Err(e) = self.timers.validate() {
            err(None, e.to_string());
        }
        let known = |n: NodeId| n.0 >= 1 && n.0 <= self.nodes;

        let mut pairs = BTreeSet::new();
        for (i, l) in self.links.iter().enumerate() {
            let line = lines.links.get(i);
            for n in [l.a, l.b] {
                if !known(n) {
                    err(line, format!("unknown node {n}"));
                }
            }
            if l.a == l.b {
                err(line, format!("link endpoints must differ (node {})", l.a));
            }
            if !(l.bandwidth > 0.0) {
                err(line, format!("bandwidth must be positive, got {}", l.bandwidth));
            }
            if !(l.prop_delay >= 0.0) {
                err(line, format!("delay must be non-negative, got {}", l.prop_delay));
            }
            if !pairs.insert((l.a.min(l.b), l.a.max(l.b))) {
                err(line, format!("duplicate link {}-{}", l.a, l.b));
            }
        }
        let linked = |a: NodeId, b: NodeId| pairs.contains(&(a.min(b), a.max(b)));

        for (i, r) in self.routes.iter().enumerate() {
            let line = lines.routes.get(i);
            for n in [r.node, r.dst, r.next_hop] {
                if !known(n) {
                    err(line, format!("unknown node {n}"));
                }
            }
            if !linked(r.node, r.next_hop) {
                err(line, format!("no link {}-{}", r.node, r.next_hop));
            }
        }

        let mut generator_ids = BTreeSet::new();
        for (i, g) in self.generators.iter().enumerate() {
            let line = lines.generators.get(i);
            if !generator_ids.insert(g.id) {
                err(line, format!("generator {} defined twice", g.id));
            }
            for n in [g.node, g.dst] {
                if !known(n) {
                    err(line, format!("unknown node {n}"));
                }
            }
            if g.node == g.dst {
                err(line, "generator source and destination must differ".into());
            }
            if g.packet_size == 0 || !(g.rate > 0.0) {
                err(line, "packet size and rate must be positive".into());
            }
            if !(g.start >= 0.0) {
                err(line, format!("start must be non-negative, got {}", g.start));
            }
            match g.kind {
                GeneratorKind::ExpOnOff => {
                    if !(g.on_mean.is_some_and(|v| v > 0.0) && g.off_mean.is_some_and(|v| v > 0.0))
                    {
                        err(line, "EXP_ON_OFF needs positive on_mean and off_mean".into());
                    }
                }
                GeneratorKind::Pareto => {
                    if !g.pareto_shape.is_some_and(|s| s > 1.0) {
                        err(line, "PARETO needs shape > 1".into());
                    }
                }
                GeneratorKind::Cbr | GeneratorKind::Exponential => {}
            }
            if let Some(p) = g.policer {
                if !(p.rate > 0.0 && p.bucket_size >= 0.0) {
                    err(line, "policer rate must be positive and bucket non-negative".into());
                }
            }
        }

        let check_route = |route: &[NodeId], start: NodeId, end: NodeId| -> Result<(), String> {
            if route.len() < 2 {
                return Err("route needs at least two nodes".into());
            }
            if route[0] != start {
                return Err(format!("route does not start at {start}"));
            }
            if route[route.len() - 1] != end {
                return Err(format!("route does not end at {end}"));
            }
            let mut seen = BTreeSet::new();
            for n in route {
                if !known(*n) {
                    return Err(format!("unknown node {n}"));
                }
                if !seen.insert(*n) {
                    return Err(format!("node {n} appears twice in route"));
                }
            }
            for w in route.windows(2) {
                if !linked(w[0], w[1]) {
                    return Err(format!("no link {}-{}", w[0], w[1]));
                }
            }
            Ok(())
        };

        let mut lsp_routes: BTreeMap<LspId, &[NodeId]> = BTreeMap::new();
        let mut lsp_ids = BTreeSet::new();
        for (i, l) in self.lsps.iter().enumerate() {
            let line = lines.lsps.get(i);
            if !lsp_ids.insert(l.id) {
                err(line, format!("lsp {} defined twice", l.id));
            }
            if !(l.bandwidth >= 0.0) {
                err(line, format!("bandwidth must be non-negative, got {}", l.bandwidth));
            }
            if let Err(e) = check_route(&l.route, l.ingress, l.egress) {
                err(line, e);
            }
            lsp_routes.insert(l.id, &l.route);
        }
        for (i, b) in self.backups.iter().enumerate() {
            let line = lines.backups.get(i);
            if !lsp_ids.insert(b.id) {
                err(line, format!("lsp {} defined twice", b.id));
            }
            let Some(protected) = lsp_routes.get(&b.protects) else {
                err(line, format!("unknown protected lsp {}", b.protects));
                continue;
            };
            let pos = |n: NodeId| protected.iter().position(|x| *x == n);
            match (pos(b.merge_start), pos(b.merge_end)) {
                (Some(s), Some(e)) if s < e => {}
                (None, _) => err(
                    line,
                    format!("merge_start {} is not on lsp {}", b.merge_start, b.protects),
                ),
                (_, None) => err(
                    line,
                    format!("merge_end {} is not on lsp {}", b.merge_end, b.protects),
                ),
                _ => err(line, "merge_start must precede merge_end".into()),
            }
            if let Err(e) = check_route(&b.route, b.merge_start, b.merge_end) {
                err(line, e);
            }
        }

        for (i, f) in self.failures.iter().enumerate() {
            let line = lines.failures.get(i);
            if !linked(f.a, f.b) {
                err(line, format!("no link {}-{}", f.a, f.b));
            }
            if !(f.fail_at >= 0.0) {
                err(line, format!("fail_at must be non-negative, got {}", f.fail_at));
            }
            if let Some(r) = f.restore_at {
                if !(r > f.fail_at) {
                    err(line, format!("restore_at {r} must be after fail_at {}", f.fail_at));
                }
            }
        }
        errors
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

fn route(nodes: &[NodeId]) -> String {
    nodes
        .iter()
        .map(|n| n.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Canonical text form; [`parse`] reads it back to an equal config.
impl fmt::Display for ScenarioConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        let _ = writeln!(s, "[sim]\nend {}\nseed {}", self.end, self.seed);
        let _ = writeln!(s, "\n[nodes]\ncount {}", self.nodes);
        s.push_str("\n[links]\n");
        for l in &self.links {
            let _ = writeln!(s, "{} {} {} {}", l.a, l.b, l.bandwidth, l.prop_delay);
        }
        s.push_str("\n[routes]\n");
        for r in &self.routes {
            let _ = writeln!(s, "{} {} {}", r.node, r.dst, r.next_hop);
        }
        s.push_str("\n[generators]\n");
        for g in &self.generators {
            let _ = write!(
                s,
                "{} {} {} {} {} {} {} {} {}",
                g.id,
                g.kind,
                g.node,
                g.dst,
                g.packet_size,
                g.rate,
                opt(g.on_mean),
                opt(g.off_mean),
                g.start
            );
            if let Some(v) = g.pareto_shape {
                let _ = write!(s, " shape={v}");
            }
            if let Some(v) = g.pareto_scale {
                let _ = write!(s, " scale={v}");
            }
            if let Some(p) = g.policer {
                let _ = write!(s, " policer_rate={} policer_bucket={}", p.rate, p.bucket_size);
            }
            s.push('\n');
        }
        s.push_str("\n[lsps]\n");
        for l in &self.lsps {
            let _ = write!(
                s,
                "{} {} {} {} {}",
                l.id,
                l.ingress,
                l.egress,
                l.bandwidth,
                route(&l.route)
            );
            s.push_str(if l.optional { " optional\n" } else { "\n" });
        }
        s.push_str("\n[backups]\n");
        for b in &self.backups {
            let _ = writeln!(
                s,
                "{} {} {} {} {}",
                b.id,
                b.protects,
                b.merge_start,
                b.merge_end,
                route(&b.route)
            );
        }
        s.push_str("\n[failures]\n");
        for x in &self.failures {
            let _ = writeln!(s, "{} {} {} {}", x.a, x.b, x.fail_at, opt(x.restore_at));
        }
        s.push_str("\n[timers]\n");
        for key in Timers::KEYS {
            let _ = writeln!(s, "{key} {}", self.timers.get(key).expect("known key"));
        }
        f.write_str(&s)
    }
}
