//! Edge stream text format and the test-stream generator.
//!
//! One event per line: an optional `+` or `-` op token (insert is the
//! default) followed by two distinct vertex ids. `#` starts a comment and
//! blank lines are skipped. Errors carry 1-based line numbers.

use std::collections::HashSet;
use std::io::{self, BufRead, Write};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::pattern::Pattern;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Insert,
    Delete,
}

/// One turnstile stream event over undirected edge `{u, v}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeEvent {
    pub op: Op,
    pub u: u64,
    pub v: u64,
}

impl EdgeEvent {
    pub fn insert(u: u64, v: u64) -> EdgeEvent {
        EdgeEvent { op: Op::Insert, u, v }
    }

    pub fn delete(u: u64, v: u64) -> EdgeEvent {
        EdgeEvent { op: Op::Delete, u, v }
    }
}

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Parses one line; `Ok(None)` for blank or comment-only lines.
pub fn parse_line(raw: &str, line: usize) -> Result<Option<EdgeEvent>, StreamError> {
    let content = raw.split('#').next().unwrap_or("");
    let fields: Vec<&str> = content.split_whitespace().collect();
    if fields.is_empty() {
        return Ok(None);
    }
    let (op, ids) = match fields[0] {
        "+" => (Op::Insert, &fields[1..]),
        "-" => (Op::Delete, &fields[1..]),
        _ => (Op::Insert, &fields[..]),
    };
    if ids.len() != 2 {
        return Err(StreamError::Parse {
            line,
            msg: format!("expected [+|-] <u> <v>, got '{}'", content.trim()),
        });
    }
    let u: u64 = ids[0].parse().map_err(|_| StreamError::Parse {
        line,
        msg: format!("'{}' is not a vertex id", ids[0]),
    })?;
    let v: u64 = ids[1].parse().map_err(|_| StreamError::Parse {
        line,
        msg: format!("'{}' is not a vertex id", ids[1]),
    })?;
    if u == v {
        return Err(StreamError::Parse {
            line,
            msg: format!("self-loop at vertex {u}"),
        });
    }
    Ok(Some(EdgeEvent { op, u, v }))
}

/// Streaming reader over any buffered source.
pub struct StreamReader<R: BufRead> {
    source: io::Lines<R>,
    line: usize,
}

impl<R: BufRead> StreamReader<R> {
    pub fn new(source: R) -> StreamReader<R> {
        StreamReader {
            source: source.lines(),
            line: 0,
        }
    }
}

impl<R: BufRead> Iterator for StreamReader<R> {
    type Item = Result<EdgeEvent, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.line += 1;
            match self.source.next()? {
                Err(e) => return Some(Err(e.into())),
                Ok(raw) => match parse_line(&raw, self.line) {
                    Err(e) => return Some(Err(e)),
                    Ok(Some(ev)) => return Some(Ok(ev)),
                    Ok(None) => continue,
                },
            }
        }
    }
}

/// Parses a whole stream held in memory.
pub fn parse_events(text: &str) -> Result<Vec<EdgeEvent>, StreamError> {
    StreamReader::new(io::Cursor::new(text)).collect()
}

/// Writes events in the text format (`u v` for inserts, `- u v` for deletes).
pub fn write_events<W: Write>(mut w: W, events: &[EdgeEvent]) -> io::Result<()> {
    for ev in events {
        match ev.op {
            Op::Insert => writeln!(w, "{} {}", ev.u, ev.v)?,
            Op::Delete => writeln!(w, "- {} {}", ev.u, ev.v)?,
        }
    }
    Ok(())
}

pub fn events_to_string(events: &[EdgeEvent]) -> String {
    let mut buf = Vec::new();
    write_events(&mut buf, events).unwrap();
    String::from_utf8(buf).unwrap()
}

/// Tallies of one pass over a stream.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct StreamStats {
    pub events: u64,
    pub insertions: u64,
    pub deletions: u64,
}

impl StreamStats {
    pub fn record(&mut self, ev: &EdgeEvent) {
        self.events += 1;
        match ev.op {
            Op::Insert => self.insertions += 1,
            Op::Delete => self.deletions += 1,
        }
    }

    /// Directed edge count of the net graph: twice the surviving undirected
    /// edges, assuming the stream never deletes an absent edge.
    pub fn directed_edges(&self) -> i64 {
        2 * (self.insertions as i64 - self.deletions as i64)
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("invalid generator parameters: {0}")]
    BadParams(String),
    #[error("could not place more edges: {0}")]
    Infeasible(String),
}

/// Settings for [`generate`].
#[derive(Debug, Clone)]
pub struct GenParams {
    pub nodes: u64,
    pub edges: u64,
    pub max_degree: u32,
    /// Copies of a pattern inserted on fresh vertices beyond `nodes`.
    pub plant: Option<(Arc<Pattern>, u64)>,
    /// Insert+delete pairs appended after the base stream; they cancel, so
    /// the replayed graph is unchanged.
    pub churn_pairs: u64,
    pub seed: u64,
}

/// Produces a random insert stream with a degree cap, optional planted
/// pattern copies, and optional churn. Deterministic in the seed.
///
/// The degree cap holds on every prefix of the stream: base edges only grow
/// degrees up to the cap, planted copies live on fresh vertices, and each
/// churn insert is checked against the cap before being (immediately)
/// deleted again.
pub fn generate(params: &GenParams) -> Result<Vec<EdgeEvent>, GenError> {
    let GenParams {
        nodes,
        edges,
        max_degree,
        ref plant,
        churn_pairs,
        seed,
    } = *params;
    if nodes < 2 {
        return Err(GenError::BadParams(format!(
            "need at least 2 nodes, got {nodes}"
        )));
    }
    if max_degree == 0 {
        return Err(GenError::BadParams("max degree must be positive".into()));
    }
    if 2 * edges > nodes * max_degree as u64 {
        return Err(GenError::BadParams(format!(
            "{edges} edges cannot fit in {nodes} nodes at max degree {max_degree}"
        )));
    }
    if let Some((pattern, count)) = plant {
        if *count > 0 {
            let widest = (0..pattern.vertex_count())
                .map(|b| pattern.degree(b))
                .max()
                .unwrap();
            if widest > max_degree as usize {
                return Err(GenError::BadParams(format!(
                    "pattern has a degree-{widest} vertex, above the cap {max_degree}"
                )));
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    let mut present: HashSet<(u64, u64)> = HashSet::new();
    let mut degree: Vec<u32> = vec![0; nodes as usize];

    let budget = 200 * edges + 10_000;
    let mut attempts = 0u64;
    while (present.len() as u64) < edges {
        attempts += 1;
        if attempts > budget {
            return Err(GenError::Infeasible(format!(
                "placed {} of {edges} edges within the attempt budget",
                present.len()
            )));
        }
        let u = rng.random_range(0..nodes);
        let v = rng.random_range(0..nodes);
        if u == v {
            continue;
        }
        let key = (u.min(v), u.max(v));
        if present.contains(&key)
            || degree[u as usize] >= max_degree
            || degree[v as usize] >= max_degree
        {
            continue;
        }
        present.insert(key);
        degree[u as usize] += 1;
        degree[v as usize] += 1;
        events.push(EdgeEvent::insert(u, v));
    }

    if let Some((pattern, count)) = plant {
        for c in 0..*count {
            let base = nodes + c * pattern.vertex_count() as u64;
            for &(a, b) in pattern.edges() {
                events.push(EdgeEvent::insert(base + a as u64, base + b as u64));
            }
        }
    }

    let mut attempts = 0u64;
    for _ in 0..churn_pairs {
        loop {
            attempts += 1;
            if attempts > 200 * churn_pairs + 10_000 {
                return Err(GenError::Infeasible(
                    "no room for churn pairs under the degree cap".into(),
                ));
            }
            let u = rng.random_range(0..nodes);
            let v = rng.random_range(0..nodes);
            if u == v {
                continue;
            }
            let key = (u.min(v), u.max(v));
            if present.contains(&key)
                || degree[u as usize] >= max_degree
                || degree[v as usize] >= max_degree
            {
                continue;
            }
            events.push(EdgeEvent::insert(u, v));
            events.push(EdgeEvent::delete(u, v));
            break;
        }
    }

    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn parse_op_forms() {
        assert_eq!(
            parse_line("+ 7 9", 1).unwrap(),
            Some(EdgeEvent::insert(7, 9))
        );
        assert_eq!(parse_line("7 9", 1).unwrap(), Some(EdgeEvent::insert(7, 9)));
        assert_eq!(
            parse_line("- 7 9", 1).unwrap(),
            Some(EdgeEvent::delete(7, 9))
        );
        assert_eq!(parse_line("  # nothing", 1).unwrap(), None);
        assert_eq!(parse_line("", 1).unwrap(), None);
        assert_eq!(
            parse_line("3 4 # trailing comment", 1).unwrap(),
            Some(EdgeEvent::insert(3, 4))
        );
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let text = "1 2\n\n# comment\n1 2 3\n";
        let err = parse_events(text).unwrap_err();
        assert_eq!(err.to_string(), "line 4: expected [+|-] <u> <v>, got '1 2 3'");

        let err = parse_events("1 2\n- x 3\n").unwrap_err();
        assert!(err.to_string().starts_with("line 2:"));

        let err = parse_events("5 5\n").unwrap_err();
        assert_eq!(err.to_string(), "line 1: self-loop at vertex 5");

        let err = parse_events("7\n").unwrap_err();
        assert!(err.to_string().starts_with("line 1:"));
    }

    #[test]
    fn round_trip() {
        let events = vec![
            EdgeEvent::insert(1, 2),
            EdgeEvent::delete(1, 2),
            EdgeEvent::insert(u64::MAX, 0),
        ];
        let text = events_to_string(&events);
        assert_eq!(parse_events(&text).unwrap(), events);
    }

    #[test]
    fn stats_track_ops() {
        let mut stats = StreamStats::default();
        for ev in parse_events("1 2\n2 3\n- 1 2\n").unwrap() {
            stats.record(&ev);
        }
        assert_eq!(stats.events, 3);
        assert_eq!(stats.insertions, 2);
        assert_eq!(stats.deletions, 1);
        assert_eq!(stats.directed_edges(), 2);
    }

    #[test]
    fn generator_is_deterministic() {
        let params = GenParams {
            nodes: 30,
            edges: 60,
            max_degree: 8,
            plant: Some((Pattern::builtin("triangle").unwrap(), 2)),
            churn_pairs: 5,
            seed: 99,
        };
        let a = generate(&params).unwrap();
        let b = generate(&params).unwrap();
        assert_eq!(a, b);
        let c = generate(&GenParams { seed: 100, ..params }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn degree_cap_holds_on_every_prefix() {
        let params = GenParams {
            nodes: 20,
            edges: 38,
            max_degree: 4,
            plant: None,
            churn_pairs: 10,
            seed: 7,
        };
        let events = generate(&params).unwrap();
        let mut deg: HashMap<u64, i32> = HashMap::new();
        for ev in &events {
            let delta = if ev.op == Op::Insert { 1 } else { -1 };
            for id in [ev.u, ev.v] {
                let d = deg.entry(id).or_default();
                *d += delta;
                assert!(*d >= 0 && *d <= 4, "degree of {id} left [0, 4]");
            }
        }
    }

    #[test]
    fn planting_without_noise_emits_just_the_pattern() {
        let params = GenParams {
            nodes: 10,
            edges: 0,
            max_degree: 3,
            plant: Some((Pattern::builtin("triangle").unwrap(), 1)),
            churn_pairs: 0,
            seed: 0,
        };
        let events = generate(&params).unwrap();
        assert_eq!(
            events,
            vec![
                EdgeEvent::insert(10, 11),
                EdgeEvent::insert(11, 12),
                EdgeEvent::insert(12, 10),
            ]
        );
    }

    #[test]
    fn churn_cancels_exactly() {
        let base = GenParams {
            nodes: 25,
            edges: 40,
            max_degree: 6,
            plant: None,
            churn_pairs: 0,
            seed: 3,
        };
        let churned = GenParams {
            churn_pairs: 50,
            ..base.clone()
        };
        let net = |events: &[EdgeEvent]| {
            let mut set = HashSet::new();
            for ev in events {
                let key = (ev.u.min(ev.v), ev.u.max(ev.v));
                match ev.op {
                    Op::Insert => assert!(set.insert(key)),
                    Op::Delete => assert!(set.remove(&key)),
                }
            }
            set
        };
        assert_eq!(
            net(&generate(&base).unwrap()),
            net(&generate(&churned).unwrap())
        );
    }

    #[test]
    fn infeasible_parameters_are_rejected() {
        let params = GenParams {
            nodes: 4,
            edges: 10,
            max_degree: 2,
            plant: None,
            churn_pairs: 0,
            seed: 0,
        };
        assert!(matches!(generate(&params), Err(GenError::BadParams(_))));

        let params = GenParams {
            nodes: 10,
            edges: 2,
            max_degree: 1,
            plant: Some((Pattern::builtin("triangle").unwrap(), 1)),
            churn_pairs: 0,
            seed: 0,
        };
        assert!(matches!(generate(&params), Err(GenError::BadParams(_))));
    }
}
