//! Text formats: DEC-POMDP model files, policy documents and trace CSV.
//!
//! # Model files
//!
//! Line-oriented, `#` starts a comment. Header:
//!
//! ```text
//! agents: 2
//! discount: 0.99
//! values: reward
//! states: 4                 # or a list of labels
//! actions:
//! wait push                 # one line per agent: a count or labels
//! wait push
//! observations:
//! lo hi
//! lo hi
//! start: uniform            # or |X| probabilities, or one state
//! ```
//!
//! Body statements, each index being a label, a 0-based integer or `*`:
//!
//! ```text
//! T: <a1 .. aN> : <x> : <x'> : <p>
//! T: <a1 .. aN> : <x> :           # row over x' follows
//! T: <a1 .. aN> :                 # |X|x|X| matrix, `uniform` or `identity` follows
//! O: <a1 .. aN> : <x'> : <o1 .. oN> : <p>
//! O: <a1 .. aN> : <x'> :          # row over joint observations follows
//! O: <a1 .. aN> :                 # |X|x|Y| matrix or `uniform` follows
//! R: <a1 .. aN> : <x> : <r>
//! R: <a1 .. aN> : <x> : * : * : <r>
//! ```
//!
//! A joint action or observation may also be a single `*` or a single joint
//! index. Observations condition on the state reached and the joint action
//! that led there. Unspecified transition and observation entries are 0.
//! Cells set by a line containing `*` may be overwritten by later lines;
//! setting a cell twice from wildcard-free lines is an error. Completed
//! rows must sum to 1 within 1e-9; values are kept exactly as written so
//! that parsing a serialized model reproduces it bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{
    validate_model, AgentController, DecPomdpModel, JointPolicy, JointSpace, STOCHASTIC_TOL,
};
use crate::solver::IterationTrace;

/// A parsed model file together with where it came from.
#[derive(Debug, Clone)]
pub struct ModelDocument {
    pub source: String,
    pub text: String,
    pub model: DecPomdpModel,
}

impl ModelDocument {
    pub fn parse(source: impl Into<String>, text: impl Into<String>, discount: Option<f64>) -> Result<Self> {
        let text = text.into();
        let model = parse_model_with_discount(&text, discount)?;
        Ok(ModelDocument {
            source: source.into(),
            text,
            model,
        })
    }

    pub fn load(path: &Path, discount: Option<f64>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(path.display().to_string(), text, discount)
    }
}

pub fn parse_model(text: &str) -> Result<DecPomdpModel> {
    parse_model_with_discount(text, None)
}

/// Parses a model, replacing the file's discount with `discount` when given.
pub fn parse_model_with_discount(text: &str, discount: Option<f64>) -> Result<DecPomdpModel> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let last_line = text.lines().count().max(1);
    let mut p = ModelParser {
        lines,
        pos: 0,
        last_line,
        header: Header::default(),
        body: None,
    };
    p.run()?;
    p.finish(discount)
}

#[derive(Default)]
struct Header {
    agents: Option<usize>,
    discount: Option<(f64, usize)>,
    cost: Option<bool>,
    states: Option<Vec<String>>,
    actions: Option<Vec<Vec<String>>>,
    observations: Option<Vec<Vec<String>>>,
    start: Option<(Vec<f64>, usize)>,
}

#[derive(Clone, Copy, PartialEq)]
enum Origin {
    Unset,
    Wildcard,
    Explicit(usize),
}

struct Table {
    name: &'static str,
    values: Vec<f64>,
    origin: Vec<Origin>,
}

impl Table {
    fn new(name: &'static str, len: usize) -> Self {
        Table {
            name,
            values: vec![0.0; len],
            origin: vec![Origin::Unset; len],
        }
    }

    fn set(&mut self, idx: usize, value: f64, wildcard: bool, line: usize) -> Result<()> {
        if let Origin::Explicit(prev) = self.origin[idx] {
            return Err(Error::parse(
                line,
                format!("{} entry already assigned on line {prev}", self.name),
            ));
        }
        self.values[idx] = value;
        self.origin[idx] = if wildcard {
            Origin::Wildcard
        } else {
            Origin::Explicit(line)
        };
        Ok(())
    }
}

struct Body {
    nx: usize,
    actions: JointSpace,
    observations: JointSpace,
    transition: Table,
    observation: Table,
    reward: Table,
}

enum Values {
    Uniform,
    Identity,
    Numbers(Vec<f64>),
}

struct ModelParser<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
    last_line: usize,
    header: Header,
    body: Option<Body>,
}

fn parse_count_or_labels(rest: &str, line: usize, what: &str) -> Result<Vec<String>> {
    let toks: Vec<&str> = rest.split_whitespace().collect();
    match toks.as_slice() {
        [] => Err(Error::parse(line, format!("missing {what}"))),
        [single] if single.parse::<usize>().is_ok() => {
            let n: usize = single.parse().unwrap_or(0);
            if n == 0 {
                return Err(Error::parse(line, format!("{what}: count must be positive")));
            }
            Ok((0..n).map(|i| i.to_string()).collect())
        }
        labels => {
            for (k, l) in labels.iter().enumerate() {
                if labels[..k].contains(l) {
                    return Err(Error::parse(line, format!("{what}: duplicate label '{l}'")));
                }
            }
            Ok(labels.iter().map(|s| s.to_string()).collect())
        }
    }
}

fn parse_number(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(line, format!("expected a number, found '{tok}'")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite number '{tok}'")));
    }
    Ok(v)
}

fn parse_probability(tok: &str, line: usize) -> Result<f64> {
    let v = parse_number(tok, line)?;
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::parse(line, format!("probability {v} outside [0, 1]")));
    }
    Ok(v)
}

/// Resolves one index token against `labels`: `*`, a label, or an integer.
fn resolve(tok: &str, labels: &[String], line: usize, what: &str) -> Result<Vec<usize>> {
    if tok == "*" {
        return Ok((0..labels.len()).collect());
    }
    if let Some(i) = labels.iter().position(|l| l == tok) {
        return Ok(vec![i]);
    }
    match tok.parse::<usize>() {
        Ok(i) if i < labels.len() => Ok(vec![i]),
        _ => Err(Error::parse(line, format!("unknown {what} '{tok}'"))),
    }
}

/// Resolves a joint index field: one token per agent, a single `*`, or a
/// single joint integer index. Returns the joint indices and whether a
/// wildcard was used.
fn resolve_joint(
    field: &str,
    labels: &[Vec<String>],
    space: &JointSpace,
    line: usize,
    what: &str,
) -> Result<(Vec<usize>, bool)> {
    let toks: Vec<&str> = field.split_whitespace().collect();
    let n = labels.len();
    if toks.len() == 1 && n > 1 {
        if toks[0] == "*" {
            return Ok(((0..space.len()).collect(), true));
        }
        return match toks[0].parse::<usize>() {
            Ok(j) if j < space.len() => Ok((vec![j], false)),
            _ => Err(Error::parse(
                line,
                format!("joint {what} needs {n} components, found '{}'", toks[0]),
            )),
        };
    }
    if toks.len() != n {
        return Err(Error::parse(
            line,
            format!("joint {what} needs {n} components, found {}", toks.len()),
        ));
    }
    let per_agent = toks
        .iter()
        .zip(labels)
        .map(|(t, l)| resolve(t, l, line, what))
        .collect::<Result<Vec<_>>>()?;
    let wildcard = toks.contains(&"*");
    // cartesian product, last agent fastest
    let mut out = vec![0usize];
    for (i, choices) in per_agent.iter().enumerate() {
        let stride = space.stride(i);
        out = out
            .iter()
            .flat_map(|base| choices.iter().map(move |c| base + c * stride))
            .collect();
    }
    Ok((out, wildcard))
}

impl<'a> ModelParser<'a> {
    fn run(&mut self) -> Result<()> {
        while self.pos < self.lines.len() {
            let (line, text) = self.lines[self.pos];
            self.pos += 1;
            let Some((key, rest)) = text.split_once(':') else {
                return Err(Error::parse(line, format!("expected 'keyword:', found '{text}'")));
            };
            let rest = rest.trim();
            match key.trim() {
                "agents" => self.agents(rest, line)?,
                "discount" => {
                    once(&self.header.discount, line, "discount")?;
                    self.header.discount = Some((parse_number(rest, line)?, line));
                }
                "values" => {
                    once(&self.header.cost, line, "values")?;
                    self.header.cost = Some(match rest {
                        "reward" => false,
                        "cost" => true,
                        other => {
                            return Err(Error::parse(
                                line,
                                format!("values must be 'reward' or 'cost', found '{other}'"),
                            ))
                        }
                    });
                }
                "states" => {
                    once(&self.header.states, line, "states")?;
                    self.header.states = Some(parse_count_or_labels(rest, line, "states")?);
                }
                "actions" => {
                    once(&self.header.actions, line, "actions")?;
                    let sets = self.per_agent_sets(rest, line, "actions")?;
                    self.header.actions = Some(sets);
                }
                "observations" => {
                    once(&self.header.observations, line, "observations")?;
                    let sets = self.per_agent_sets(rest, line, "observations")?;
                    self.header.observations = Some(sets);
                }
                "start" => self.start(rest, line)?,
                "T" => self.transition(rest, line)?,
                "O" => self.observation(rest, line)?,
                "R" => self.reward(rest, line)?,
                other => return Err(Error::parse(line, format!("unknown keyword '{other}'"))),
            }
        }
        Ok(())
    }

    fn agents(&mut self, rest: &str, line: usize) -> Result<()> {
        once(&self.header.agents, line, "agents")?;
        let names = parse_count_or_labels(rest, line, "agents")?;
        self.header.agents = Some(names.len());
        Ok(())
    }

    fn per_agent_sets(&mut self, rest: &str, line: usize, what: &str) -> Result<Vec<Vec<String>>> {
        let n = self
            .header
            .agents
            .ok_or_else(|| Error::parse(line, format!("'{what}' before 'agents'")))?;
        if !rest.is_empty() {
            if n == 1 {
                return Ok(vec![parse_count_or_labels(rest, line, what)?]);
            }
            return Err(Error::parse(
                line,
                format!("'{what}:' must be followed by {n} lines, one per agent"),
            ));
        }
        let mut sets = Vec::with_capacity(n);
        for i in 0..n {
            let Some(&(l, text)) = self.lines.get(self.pos) else {
                return Err(Error::parse(
                    self.last_line,
                    format!("'{what}': expected {n} agent lines, found {i}"),
                ));
            };
            if text.contains(':') {
                return Err(Error::parse(l, format!("'{what}': expected {n} agent lines, found {i}")));
            }
            self.pos += 1;
            sets.push(parse_count_or_labels(text, l, what)?);
        }
        Ok(sets)
    }

    /// Collects value tokens starting with `inline`, then continuing on the
    /// following keyword-free lines, until `count` numbers are read or a
    /// `uniform`/`identity` keyword is seen.
    fn values(&mut self, inline: &str, count: usize, line: usize) -> Result<Values> {
        let mut toks: Vec<(usize, String)> = inline
            .split_whitespace()
            .map(|t| (line, t.to_string()))
            .collect();
        loop {
            if let Some((_, first)) = toks.first() {
                match first.as_str() {
                    "uniform" if toks.len() == 1 => return Ok(Values::Uniform),
                    "identity" if toks.len() == 1 => return Ok(Values::Identity),
                    _ => {}
                }
            }
            if toks.len() >= count {
                break;
            }
            match self.lines.get(self.pos) {
                Some(&(l, text)) if !text.contains(':') => {
                    self.pos += 1;
                    toks.extend(text.split_whitespace().map(|t| (l, t.to_string())));
                }
                _ => {
                    return Err(Error::parse(
                        toks.last().map_or(line, |t| t.0),
                        format!("expected {count} values, found {}", toks.len()),
                    ))
                }
            }
        }
        if toks.len() > count {
            return Err(Error::parse(
                toks[count].0,
                format!("expected {count} values, found more"),
            ));
        }
        toks.iter()
            .map(|(l, t)| parse_number(t, *l))
            .collect::<Result<Vec<_>>>()
            .map(Values::Numbers)
    }

    fn start(&mut self, rest: &str, line: usize) -> Result<()> {
        once(&self.header.start, line, "start")?;
        let states = self
            .header
            .states
            .clone()
            .ok_or_else(|| Error::parse(line, "'start' before 'states'"))?;
        let nx = states.len();
        let toks: Vec<&str> = rest.split_whitespace().collect();
        let dist = if toks.len() == 1 && nx > 1 && toks[0] != "uniform" {
            let idx = resolve(toks[0], &states, line, "state")?;
            let mut d = vec![0.0; nx];
            for i in idx {
                d[i] = 1.0 / nx as f64;
            }
            if toks[0] != "*" {
                d[resolve(toks[0], &states, line, "state")?[0]] = 1.0;
            }
            d
        } else {
            match self.values(rest, nx, line)? {
                Values::Uniform => vec![1.0 / nx as f64; nx],
                Values::Identity => return Err(Error::parse(line, "'identity' is not a start distribution")),
                Values::Numbers(v) => {
                    for p in &v {
                        if !(0.0..=1.0).contains(p) {
                            return Err(Error::parse(line, format!("probability {p} outside [0, 1]")));
                        }
                    }
                    v
                }
            }
        };
        self.header.start = Some((dist, line));
        Ok(())
    }

    fn body(&mut self, line: usize) -> Result<&mut Body> {
        if self.body.is_none() {
            let h = &self.header;
            let (Some(states), Some(actions), Some(observations)) =
                (&h.states, &h.actions, &h.observations)
            else {
                return Err(Error::parse(
                    line,
                    "'states', 'actions' and 'observations' must precede T/O/R statements",
                ));
            };
            let nx = states.len();
            let aspace = JointSpace::new(actions.iter().map(Vec::len).collect());
            let yspace = JointSpace::new(observations.iter().map(Vec::len).collect());
            let na = aspace.len();
            let ny = yspace.len();
            self.body = Some(Body {
                nx,
                transition: Table::new("transition", nx * na * nx),
                observation: Table::new("observation", nx * na * ny),
                reward: Table::new("reward", nx * na),
                actions: aspace,
                observations: yspace,
            });
        }
        Ok(self.body.as_mut().expect("initialized above"))
    }

    fn joint_actions(&mut self, field: &str, line: usize) -> Result<(Vec<usize>, bool)> {
        let labels = self.header.actions.clone().unwrap_or_default();
        let space = self.body(line)?.actions.clone();
        resolve_joint(field, &labels, &space, line, "action")
    }

    fn state_index(&self, field: &str, line: usize) -> Result<(Vec<usize>, bool)> {
        let states = self.header.states.as_deref().unwrap_or_default();
        let toks: Vec<&str> = field.split_whitespace().collect();
        match toks.as_slice() {
            [t] => Ok((resolve(t, states, line, "state")?, *t == "*")),
            _ => Err(Error::parse(line, format!("expected one state, found '{}'", field.trim()))),
        }
    }

    fn transition(&mut self, rest: &str, line: usize) -> Result<()> {
        let fields: Vec<&str> = rest.split(':').collect();
        let (acts, wa) = self.joint_actions(fields[0], line)?;
        let nx = self.body(line)?.nx;
        let na = self.body(line)?.actions.len();
        match fields.len() {
            4 => {
                let (xs, wx) = self.state_index(fields[1], line)?;
                let (x2s, wx2) = self.state_index(fields[2], line)?;
                let p = parse_probability(fields[3].trim(), line)?;
                let wild = wa || wx || wx2;
                let t = &mut self.body(line)?.transition;
                for &a in &acts {
                    for &x in &xs {
                        for &x2 in &x2s {
                            t.set((x * na + a) * nx + x2, p, wild, line)?;
                        }
                    }
                }
            }
            3 if fields[2].trim().is_empty() => {
                let (xs, wx) = self.state_index(fields[1], line)?;
                let row = match self.values("", nx, line)? {
                    Values::Uniform => vec![1.0 / nx as f64; nx],
                    Values::Identity => {
                        return Err(Error::parse(line, "'identity' needs the matrix form 'T: <a> :'"))
                    }
                    Values::Numbers(v) => v,
                };
                check_probabilities(&row, line)?;
                let wild = wa || wx;
                let t = &mut self.body(line)?.transition;
                for &a in &acts {
                    for &x in &xs {
                        for (x2, &p) in row.iter().enumerate() {
                            t.set((x * na + a) * nx + x2, p, wild, line)?;
                        }
                    }
                }
            }
            2 if fields[1].trim().is_empty() => {
                let matrix = match self.values("", nx * nx, line)? {
                    Values::Uniform => vec![1.0 / nx as f64; nx * nx],
                    Values::Identity => (0..nx * nx)
                        .map(|k| if k / nx == k % nx { 1.0 } else { 0.0 })
                        .collect(),
                    Values::Numbers(v) => v,
                };
                check_probabilities(&matrix, line)?;
                let t = &mut self.body(line)?.transition;
                for &a in &acts {
                    for x in 0..nx {
                        for x2 in 0..nx {
                            t.set((x * na + a) * nx + x2, matrix[x * nx + x2], wa, line)?;
                        }
                    }
                }
            }
            _ => {
                return Err(Error::parse(
                    line,
                    "malformed T statement; expected 'T: <actions> : <x> : <x'> : <p>'",
                ))
            }
        }
        Ok(())
    }

    fn joint_observations(&mut self, field: &str, line: usize) -> Result<(Vec<usize>, bool)> {
        let labels = self.header.observations.clone().unwrap_or_default();
        let space = self.body(line)?.observations.clone();
        resolve_joint(field, &labels, &space, line, "observation")
    }

    fn observation(&mut self, rest: &str, line: usize) -> Result<()> {
        let fields: Vec<&str> = rest.split(':').collect();
        let (acts, wa) = self.joint_actions(fields[0], line)?;
        let nx = self.body(line)?.nx;
        let na = self.body(line)?.actions.len();
        let ny = self.body(line)?.observations.len();
        match fields.len() {
            4 => {
                let (x2s, wx) = self.state_index(fields[1], line)?;
                let (ys, wy) = self.joint_observations(fields[2], line)?;
                let p = parse_probability(fields[3].trim(), line)?;
                let wild = wa || wx || wy;
                let o = &mut self.body(line)?.observation;
                for &a in &acts {
                    for &x2 in &x2s {
                        for &y in &ys {
                            o.set((x2 * na + a) * ny + y, p, wild, line)?;
                        }
                    }
                }
            }
            3 if fields[2].trim().is_empty() => {
                let (x2s, wx) = self.state_index(fields[1], line)?;
                let row = match self.values("", ny, line)? {
                    Values::Uniform => vec![1.0 / ny as f64; ny],
                    Values::Identity => return Err(Error::parse(line, "'identity' is not valid for O")),
                    Values::Numbers(v) => v,
                };
                check_probabilities(&row, line)?;
                let wild = wa || wx;
                let o = &mut self.body(line)?.observation;
                for &a in &acts {
                    for &x2 in &x2s {
                        for (y, &p) in row.iter().enumerate() {
                            o.set((x2 * na + a) * ny + y, p, wild, line)?;
                        }
                    }
                }
            }
            2 if fields[1].trim().is_empty() => {
                let matrix = match self.values("", nx * ny, line)? {
                    Values::Uniform => vec![1.0 / ny as f64; nx * ny],
                    Values::Identity => return Err(Error::parse(line, "'identity' is not valid for O")),
                    Values::Numbers(v) => v,
                };
                check_probabilities(&matrix, line)?;
                let o = &mut self.body(line)?.observation;
                for &a in &acts {
                    for x2 in 0..nx {
                        for y in 0..ny {
                            o.set((x2 * na + a) * ny + y, matrix[x2 * ny + y], wa, line)?;
                        }
                    }
                }
            }
            _ => {
                return Err(Error::parse(
                    line,
                    "malformed O statement; expected 'O: <actions> : <x'> : <observations> : <p>'",
                ))
            }
        }
        Ok(())
    }

    fn reward(&mut self, rest: &str, line: usize) -> Result<()> {
        let fields: Vec<&str> = rest.split(':').collect();
        let (acts, wa) = self.joint_actions(fields[0], line)?;
        let nx = self.body(line)?.nx;
        let na = self.body(line)?.actions.len();
        let ny = self.body(line)?.observations.len();
        let value_field = match fields.len() {
            3 => fields[2],
            4 | 5 => {
                let (x2s, _) = self.state_index(fields[2], line)?;
                let full_y = if fields.len() == 5 {
                    self.joint_observations(fields[3], line)?.0.len() == ny
                } else {
                    true
                };
                if x2s.len() != nx || !full_y {
                    return Err(Error::parse(
                        line,
                        "rewards depending on the next state or the observation are not supported; \
                         use '*' for both",
                    ));
                }
                fields[fields.len() - 1]
            }
            _ => {
                return Err(Error::parse(
                    line,
                    "malformed R statement; expected 'R: <actions> : <x> : <r>'",
                ))
            }
        };
        if value_field.trim().is_empty() {
            return Err(Error::parse(
                line,
                "row and matrix forms of R are not supported; give one value per statement",
            ));
        }
        let (xs, wx) = self.state_index(fields[1], line)?;
        let r = parse_number(value_field.trim(), line)?;
        let wild = wa || wx;
        let table = &mut self.body(line)?.reward;
        for &a in &acts {
            for &x in &xs {
                table.set(x * na + a, r, wild, line)?;
            }
        }
        Ok(())
    }

    fn finish(mut self, discount: Option<f64>) -> Result<DecPomdpModel> {
        let end = self.last_line;
        let h = &self.header;
        let missing = |what: &str| Error::parse(end, format!("missing '{what}' header"));
        let _agents = h.agents.ok_or_else(|| missing("agents"))?;
        let (file_discount, discount_line) = h.discount.ok_or_else(|| missing("discount"))?;
        let states = h.states.clone().ok_or_else(|| missing("states"))?;
        let actions = h.actions.clone().ok_or_else(|| missing("actions"))?;
        let observations = h.observations.clone().ok_or_else(|| missing("observations"))?;
        let (start, start_line) = h.start.clone().ok_or_else(|| missing("start"))?;
        let cost = h.cost.unwrap_or(false);

        let gamma = discount.unwrap_or(file_discount);
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::parse(
                discount_line,
                format!("discount {gamma} out of (0,1)"),
            ));
        }
        check_row_sum(&start)
            .map_err(|s| Error::parse(start_line, format!("start distribution sums to {s}")))?;

        let nx = states.len();
        if self.body.is_none() {
            self.body(end)?;
        }
        let body = self.body.take().expect("initialized above");
        let na = body.actions.len();
        let ny = body.observations.len();
        let transition = body.transition.values;
        let observation = body.observation.values;
        let model_labels = DecPomdpModel {
            states: states.clone(),
            actions: actions.clone(),
            observations: observations.clone(),
            initial_state: Vec::new(),
            transition: Vec::new(),
            observation: Vec::new(),
            reward: Vec::new(),
            discount: gamma,
        };
        for x in 0..nx {
            for a in 0..na {
                let row = &transition[(x * na + a) * nx..(x * na + a + 1) * nx];
                check_row_sum(row).map_err(|s| {
                    Error::parse(
                        end,
                        format!(
                            "transition row (state {}, joint action [{}]) sums to {s}: incomplete or not stochastic",
                            states[x],
                            model_labels.labels_for_joint_action(a)
                        ),
                    )
                })?;
            }
        }
        for x2 in 0..nx {
            for a in 0..na {
                let row = &observation[(x2 * na + a) * ny..(x2 * na + a + 1) * ny];
                check_row_sum(row).map_err(|s| {
                    Error::parse(
                        end,
                        format!(
                            "observation row (next state {}, joint action [{}]) sums to {s}: incomplete or not stochastic",
                            states[x2],
                            model_labels.labels_for_joint_action(a)
                        ),
                    )
                })?;
            }
        }
        let mut reward = body.reward.values;
        if cost {
            reward.iter_mut().for_each(|r| *r = -*r);
        }
        let model = DecPomdpModel {
            initial_state: start,
            transition,
            observation,
            reward,
            ..model_labels
        };
        let violations = validate_model(&model);
        if !violations.is_empty() {
            return Err(Error::InvalidModel(violations));
        }
        Ok(model)
    }
}

fn once<T>(slot: &Option<T>, line: usize, what: &str) -> Result<()> {
    if slot.is_some() {
        return Err(Error::parse(line, format!("duplicate '{what}' header")));
    }
    Ok(())
}

fn check_probabilities(values: &[f64], line: usize) -> Result<()> {
    match values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        Some(p) => Err(Error::parse(line, format!("probability {p} outside [0, 1]"))),
        None => Ok(()),
    }
}

/// Returns the row sum when it is further than the tolerance from 1.
fn check_row_sum(row: &[f64]) -> std::result::Result<(), f64> {
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > STOCHASTIC_TOL {
        return Err(s);
    }
    Ok(())
}

fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn labels_line(labels: &[String]) -> String {
    let counted = labels.iter().enumerate().all(|(i, l)| *l == i.to_string());
    if counted {
        labels.len().to_string()
    } else {
        labels.join(" ")
    }
}

/// Writes a model in the file format above. Only nonzero entries are
/// emitted.
pub fn serialize_model(model: &DecPomdpModel) -> String {
    let mut out = String::new();
    let nx = model.num_states();
    let na = model.action_space().len();
    let ny = model.observation_space().len();
    let _ = writeln!(out, "agents: {}", model.num_agents());
    let _ = writeln!(out, "discount: {}", fmt_real(model.discount));
    let _ = writeln!(out, "values: reward");
    let _ = writeln!(out, "states: {}", labels_line(&model.states));
    let _ = writeln!(out, "actions:");
    for a in &model.actions {
        let _ = writeln!(out, "{}", labels_line(a));
    }
    let _ = writeln!(out, "observations:");
    for o in &model.observations {
        let _ = writeln!(out, "{}", labels_line(o));
    }
    let start: Vec<String> = model.initial_state.iter().map(|p| fmt_real(*p)).collect();
    let _ = writeln!(out, "start: {}", start.join(" "));
    for x in 0..nx {
        for a in 0..na {
            for x2 in 0..nx {
                let p = model.transition[(x * na + a) * nx + x2];
                if p != 0.0 {
                    let _ = writeln!(
                        out,
                        "T: {} : {} : {} : {}",
                        model.labels_for_joint_action(a),
                        model.states[x],
                        model.states[x2],
                        fmt_real(p)
                    );
                }
            }
        }
    }
    for x2 in 0..nx {
        for a in 0..na {
            for y in 0..ny {
                let p = model.observation[(x2 * na + a) * ny + y];
                if p != 0.0 {
                    let _ = writeln!(
                        out,
                        "O: {} : {} : {} : {}",
                        model.labels_for_joint_action(a),
                        model.states[x2],
                        model.labels_for_joint_observation(y),
                        fmt_real(p)
                    );
                }
            }
        }
    }
    for x in 0..nx {
        for a in 0..na {
            let r = model.reward[x * na + a];
            if r != 0.0 {
                let _ = writeln!(
                    out,
                    "R: {} : {} : {}",
                    model.labels_for_joint_action(a),
                    model.states[x],
                    fmt_real(r)
                );
            }
        }
    }
    out
}

/// Writes a policy document:
///
/// ```text
/// agents: 2
/// memory: 2 2
/// actions: 2 3
/// observations: 2 2
/// nu: <agent> : <probs over z>
/// pi: <agent> : <z> : <probs over a>
/// lambda: <agent> : <z> : <y> : <probs over z'>
/// ```
///
/// Numbers carry 17 significant digits, so parsing reproduces the policy
/// bit for bit.
pub fn serialize_policy(policy: &JointPolicy) -> String {
    let mut out = String::from("# finite-state controller policy\n");
    let join = |v: &[f64]| v.iter().map(|p| fmt_real(*p)).collect::<Vec<_>>().join(" ");
    let counts = |f: fn(&AgentController) -> usize| {
        policy
            .agents
            .iter()
            .map(|c| f(c).to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let _ = writeln!(out, "agents: {}", policy.agents.len());
    let _ = writeln!(out, "memory: {}", counts(|c| c.memory_size));
    let _ = writeln!(out, "actions: {}", counts(|c| c.num_actions));
    let _ = writeln!(out, "observations: {}", counts(|c| c.num_observations));
    for (i, c) in policy.agents.iter().enumerate() {
        let _ = writeln!(out, "nu: {i} : {}", join(&c.nu));
        for z in 0..c.memory_size {
            let row = &c.pi[z * c.num_actions..(z + 1) * c.num_actions];
            let _ = writeln!(out, "pi: {i} : {z} : {}", join(row));
        }
        for z in 0..c.memory_size {
            for y in 0..c.num_observations {
                let b = (z * c.num_observations + y) * c.memory_size;
                let _ = writeln!(
                    out,
                    "lambda: {i} : {z} : {y} : {}",
                    join(&c.lambda[b..b + c.memory_size])
                );
            }
        }
    }
    out
}

pub fn parse_policy(text: &str) -> Result<JointPolicy> {
    let mut counts: [Option<Vec<usize>>; 4] = Default::default();
    let mut agents: Vec<AgentController> = Vec::new();
    let mut seen: Vec<Vec<bool>> = Vec::new();
    let last_line = text.lines().count().max(1);

    let parse_ints = |s: &str, line: usize| -> Result<Vec<usize>> {
        s.split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| Error::parse(line, format!("expected an integer, found '{t}'")))
            })
            .collect()
    };
    let index = |s: &str, bound: usize, line: usize, what: &str| -> Result<usize> {
        match s.trim().parse::<usize>() {
            Ok(i) if i < bound => Ok(i),
            _ => Err(Error::parse(line, format!("bad {what} index '{}'", s.trim()))),
        }
    };
    let probs = |s: &str, len: usize, line: usize| -> Result<Vec<f64>> {
        let v = s
            .split_whitespace()
            .map(|t| parse_probability(t, line))
            .collect::<Result<Vec<_>>>()?;
        if v.len() != len {
            return Err(Error::parse(line, format!("expected {len} probabilities, found {}", v.len())));
        }
        Ok(v)
    };

    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, rest)) = body.split_once(':') else {
            return Err(Error::parse(line, format!("expected 'keyword:', found '{body}'")));
        };
        let key = key.trim();
        let slot = ["agents", "memory", "actions", "observations"]
            .iter()
            .position(|k| *k == key);
        if let Some(s) = slot {
            if counts[s].is_some() {
                return Err(Error::parse(line, format!("duplicate '{key}'")));
            }
            counts[s] = Some(parse_ints(rest, line)?);
            if counts.iter().all(Option::is_some) {
                let n = match counts[0].as_deref() {
                    Some([n]) if *n > 0 => *n,
                    _ => return Err(Error::parse(line, "'agents' must be one positive integer")),
                };
                let dims: Vec<&Vec<usize>> = counts[1..].iter().flatten().collect();
                if dims.iter().any(|d| d.len() != n || d.contains(&0)) {
                    return Err(Error::parse(line, format!("size lists must have {n} positive entries")));
                }
                for i in 0..n {
                    let (nz, na, ny) = (dims[0][i], dims[1][i], dims[2][i]);
                    agents.push(AgentController {
                        memory_size: nz,
                        num_actions: na,
                        num_observations: ny,
                        pi: vec![0.0; nz * na],
                        lambda: vec![0.0; nz * ny * nz],
                        nu: vec![0.0; nz],
                    });
                    seen.push(vec![false; 1 + nz + nz * ny]);
                }
            }
            continue;
        }
        if agents.is_empty() {
            return Err(Error::parse(
                line,
                format!("'{key}' before 'agents', 'memory', 'actions' and 'observations'"),
            ));
        }
        let fields: Vec<&str> = rest.split(':').collect();
        let agent = index(fields[0], agents.len(), line, "agent")?;
        let c = &mut agents[agent];
        let (nz, na, ny) = (c.memory_size, c.num_actions, c.num_observations);
        let (slot, target): (usize, &mut [f64]) = match (key, fields.len()) {
            ("nu", 2) => (0, &mut c.nu[..]),
            ("pi", 3) => {
                let z = index(fields[1], nz, line, "memory")?;
                (1 + z, &mut c.pi[z * na..(z + 1) * na])
            }
            ("lambda", 4) => {
                let z = index(fields[1], nz, line, "memory")?;
                let y = index(fields[2], ny, line, "observation")?;
                let b = (z * ny + y) * nz;
                (1 + nz + z * ny + y, &mut c.lambda[b..b + nz])
            }
            ("nu" | "pi" | "lambda", _) => {
                return Err(Error::parse(line, format!("wrong number of fields for '{key}'")))
            }
            (other, _) => return Err(Error::parse(line, format!("unknown keyword '{other}'"))),
        };
        if seen[agent][slot] {
            return Err(Error::parse(line, format!("'{key}' row assigned twice")));
        }
        seen[agent][slot] = true;
        let row = probs(fields[fields.len() - 1], target.len(), line)?;
        target.copy_from_slice(&row);
    }
    if agents.is_empty() {
        return Err(Error::parse(last_line, "missing policy header"));
    }
    for (i, s) in seen.iter().enumerate() {
        if let Some(k) = s.iter().position(|b| !b) {
            return Err(Error::parse(
                last_line,
                format!("agent {i}: row {k} of the policy is missing"),
            ));
        }
    }
    let policy = JointPolicy { agents };
    policy.validate(None).map_err(|e| Error::parse(last_line, e.to_string()))?;
    Ok(policy)
}

pub const TRACE_HEADER: &str = "iter,J,inner_iters,elapsed_ms,algo";

/// Trace CSV, one row per outer iteration. Rust float formatting is
/// locale-independent.
pub fn write_trace_csv(trace: &[IterationTrace]) -> String {
    let mut out = String::with_capacity(32 * (trace.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for t in trace {
        let _ = writeln!(
            out,
            "{},{},{},{:.3},{}",
            t.iter, t.expected_return, t.inner_iters, t.elapsed_ms, t.algorithm
        );
    }
    out
}
