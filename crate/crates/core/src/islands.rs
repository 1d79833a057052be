//! Steady-state island populations and the master's bookkeeping.
//!
//! Children are generated for islands in round-robin order. A trained child
//! is inserted into the island it came from while the island is filling, and
//! afterwards only when strictly better than the island's worst member,
//! which it then evicts. Every decision is appended to an [`EventLog`].

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::evolution::{best_of, generate_child, mutate_with_retries, GenerationError, GenerationKind, OperatorConfig};
use crate::genome::{seed_genome, Fitness, GenomeError, InnovationRegistry, RnnGenome};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IslandConfig {
    pub n_islands: usize,
    pub population_size: usize,
    pub generation_budget: usize,
}

impl Default for IslandConfig {
    fn default() -> Self {
        Self { n_islands: 10, population_size: 5, generation_budget: 2000 }
    }
}

impl IslandConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_islands == 0 || self.population_size == 0 {
            return Err("n_islands and population_size must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum IslandError {
    #[error("genome {0} has no evaluated fitness")]
    Unevaluated(u64),
    #[error("island {island} does not exist ({n_islands} islands)")]
    UnknownIsland { island: u32, n_islands: usize },
    #[error(transparent)]
    Genome(#[from] GenomeError),
    #[error("invalid island configuration: {0}")]
    Config(String),
}

fn fitness_key(g: &RnnGenome) -> f64 {
    g.fitness.value().unwrap_or(f64::INFINITY)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InsertOutcome {
    /// Inserted; carries the fitness of the evicted member, if any.
    Inserted {
        evicted: Option<f64>,
    },
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Island {
    pub id: usize,
    pub capacity: usize,
    /// Ascending fitness, ties in arrival order.
    pub members: Vec<RnnGenome>,
}

impl Island {
    pub fn new(id: usize, capacity: usize) -> Self {
        Self { id, capacity, members: Vec::with_capacity(capacity + 1) }
    }

    pub fn is_full(&self) -> bool {
        self.members.len() >= self.capacity
    }

    pub fn best_fitness(&self) -> Option<f64> {
        self.members.first().map(fitness_key)
    }

    pub fn worst_fitness(&self) -> Option<f64> {
        self.members.last().map(fitness_key)
    }

    pub fn insert(&mut self, genome: RnnGenome) -> InsertOutcome {
        let f = fitness_key(&genome);
        let mut evicted = None;
        if self.is_full() {
            let worst = self.worst_fitness().expect("full island has members");
            if !(f < worst) {
                return InsertOutcome::Rejected;
            }
            evicted = self.members.pop().map(|g| fitness_key(&g));
        }
        let at = self.members.partition_point(|m| fitness_key(m) <= f);
        self.members.insert(at, genome);
        debug_assert!(self.members.len() <= self.capacity);
        InsertOutcome::Inserted { evicted }
    }
}

/// One line of the run-event log. `seq` is a per-run logical clock, so logs
/// of deterministic runs compare byte for byte.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    Generated { island: usize, generation_id: u64, kind: GenerationLabel },
    Discarded { island: usize, reason: String },
    Evaluated { island: usize, generation_id: u64, fitness: f64 },
    Inserted { island: usize, generation_id: u64, fitness: f64, evicted: Option<f64> },
    Rejected { island: usize, generation_id: u64, fitness: f64 },
    Failed { island: usize, generation_id: u64, reason: String },
}

/// How a child was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenerationLabel {
    Seed,
    Bootstrap,
    Mutation,
    IntraCrossover,
    InterCrossover,
}

impl GenerationLabel {
    fn as_str(self) -> &'static str {
        match self {
            GenerationLabel::Seed => "seed",
            GenerationLabel::Bootstrap => "bootstrap",
            GenerationLabel::Mutation => "mutation",
            GenerationLabel::IntraCrossover => "intra",
            GenerationLabel::InterCrossover => "inter",
        }
    }
}

impl From<GenerationKind> for GenerationLabel {
    fn from(kind: GenerationKind) -> Self {
        match kind {
            GenerationKind::Mutation => GenerationLabel::Mutation,
            GenerationKind::IntraCrossover => GenerationLabel::IntraCrossover,
            GenerationKind::InterCrossover => GenerationLabel::InterCrossover,
        }
    }
}

impl FromStr for GenerationLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "seed" => GenerationLabel::Seed,
            "bootstrap" => GenerationLabel::Bootstrap,
            "mutation" => GenerationLabel::Mutation,
            "intra" => GenerationLabel::IntraCrossover,
            "inter" => GenerationLabel::InterCrossover,
            other => return Err(format!("unknown generation kind `{other}`")),
        })
    }
}

fn sanitize(reason: &str) -> String {
    reason.replace(['\t', '\n', '\r'], " ")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| v.to_string())
}

impl fmt::Display for Event {
    /// Tab-separated: event name, island, then event-specific fields.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Event::Generated { island, generation_id, kind } => {
                write!(f, "generated\t{island}\t{generation_id}\t{}", kind.as_str())
            }
            Event::Discarded { island, reason } => write!(f, "discarded\t{island}\t{}", sanitize(reason)),
            Event::Evaluated { island, generation_id, fitness } => {
                write!(f, "evaluated\t{island}\t{generation_id}\t{fitness}")
            }
            Event::Inserted { island, generation_id, fitness, evicted } => {
                write!(f, "inserted\t{island}\t{generation_id}\t{fitness}\t{}", fmt_opt(*evicted))
            }
            Event::Rejected { island, generation_id, fitness } => {
                write!(f, "rejected\t{island}\t{generation_id}\t{fitness}")
            }
            Event::Failed { island, generation_id, reason } => {
                write!(f, "failed\t{island}\t{generation_id}\t{}", sanitize(reason))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("event log line {line}: {message}")]
pub struct EventParseError {
    pub line: usize,
    pub message: String,
}

fn parse_event(fields: &[&str]) -> Result<Event, String> {
    let num = |i: usize| -> Result<u64, String> {
        fields.get(i).ok_or("missing field")?.parse::<u64>().map_err(|e| e.to_string())
    };
    let real = |i: usize| -> Result<f64, String> {
        fields.get(i).ok_or("missing field")?.parse::<f64>().map_err(|e| e.to_string())
    };
    let text =
        |i: usize| -> Result<String, String> { fields.get(i).map(|s| s.to_string()).ok_or("missing field".into()) };
    let island = num(1)? as usize;
    let expect =
        |n: usize| if fields.len() == n { Ok(()) } else { Err(format!("expected {n} fields, found {}", fields.len())) };
    Ok(match fields[0] {
        "generated" => {
            expect(4)?;
            Event::Generated { island, generation_id: num(2)?, kind: fields[3].parse()? }
        }
        "discarded" => {
            expect(3)?;
            Event::Discarded { island, reason: text(2)? }
        }
        "evaluated" => {
            expect(4)?;
            Event::Evaluated { island, generation_id: num(2)?, fitness: real(3)? }
        }
        "inserted" => {
            expect(5)?;
            let evicted = if fields[4] == "-" { None } else { Some(real(4)?) };
            Event::Inserted { island, generation_id: num(2)?, fitness: real(3)?, evicted }
        }
        "rejected" => {
            expect(4)?;
            Event::Rejected { island, generation_id: num(2)?, fitness: real(3)? }
        }
        "failed" => {
            expect(4)?;
            Event::Failed { island, generation_id: num(2)?, reason: text(3)? }
        }
        other => return Err(format!("unknown event `{other}`")),
    })
}

/// Append-only, line-delimited run history.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub events: Vec<Event>,
}

impl EventLog {
    pub fn push(&mut self, event: Event) {
        self.events.push(event);
    }

    /// One `seq<TAB>event...` line per event.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (seq, e) in self.events.iter().enumerate() {
            out.push_str(&format!("{seq}\t{e}\n"));
        }
        out
    }

    pub fn parse(text: &str) -> Result<EventLog, EventParseError> {
        let mut events = Vec::new();
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let err = |message: String| EventParseError { line: i + 1, message };
            let fields: Vec<&str> = line.split('\t').collect();
            let seq: usize = fields[0].parse().map_err(|_| err("bad sequence number".into()))?;
            if seq != events.len() {
                return Err(err(format!("sequence {seq} out of order")));
            }
            events.push(parse_event(&fields[1..]).map_err(err)?);
        }
        Ok(EventLog { events })
    }

    /// `(evaluated_count, global_best)` before the first insertion and after
    /// every insertion.
    pub fn best_trajectory(&self) -> Vec<(usize, f64)> {
        let mut evaluated = 0;
        let mut best = f64::INFINITY;
        let mut out = vec![(0, best)];
        for e in &self.events {
            match e {
                Event::Evaluated { .. } => evaluated += 1,
                Event::Inserted { fitness, .. } => {
                    best = best.min(*fitness);
                    out.push((evaluated, best));
                }
                _ => {}
            }
        }
        out
    }
}

/// `(generation_id, fitness)` per member, per island.
pub type PopulationSummary = Vec<Vec<(u64, f64)>>;

/// Rebuilds the final island populations from the evaluated events of a log
/// alone, by re-running the insertion rule.
pub fn replay_populations(log: &EventLog, n_islands: usize, capacity: usize) -> PopulationSummary {
    let mut islands: Vec<Island> = (0..n_islands).map(|i| Island::new(i, capacity)).collect();
    for e in &log.events {
        if let Event::Evaluated { island, generation_id, fitness } = e {
            let stub = RnnGenome {
                fitness: Fitness::Evaluated(*fitness),
                generation_id: *generation_id,
                ..RnnGenome::default()
            };
            islands[*island].insert(stub);
        }
    }
    summarize(&islands)
}

pub fn summarize(islands: &[Island]) -> PopulationSummary {
    islands.iter().map(|i| i.members.iter().map(|g| (g.generation_id, fitness_key(g))).collect()).collect()
}

/// A child ready to be trained.
#[derive(Debug, Clone)]
pub struct GeneratedChild {
    pub genome: RnnGenome,
    pub island: usize,
    pub label: GenerationLabel,
}

#[derive(Debug, Clone)]
pub enum NextWork {
    Work(GeneratedChild),
    /// The generation budget is spent.
    Exhausted,
    /// Every island failed to produce a child in one full cycle.
    Stalled,
}

/// Everything the master owns.
#[derive(Debug, Clone)]
pub struct RunState {
    pub islands: Vec<Island>,
    pub registry: InnovationRegistry,
    pub seed: RnnGenome,
    pub generated_count: usize,
    pub inserted_count: usize,
    pub discarded_count: usize,
    pub evaluated_count: usize,
    pub failed_count: usize,
    pub generation_budget: usize,
    pub round_robin_cursor: usize,
    /// Islands that already received their unmodified seed copy.
    seeded: Vec<bool>,
    pub log: EventLog,
}

impl RunState {
    pub fn new<R: Rng + ?Sized>(
        n_inputs: usize,
        n_outputs: usize,
        config: &IslandConfig,
        rng: &mut R,
    ) -> Result<Self, IslandError> {
        config.validate().map_err(IslandError::Config)?;
        let mut registry = InnovationRegistry::default();
        let seed = seed_genome(n_inputs, n_outputs, &mut registry, rng)?;
        Ok(Self {
            islands: (0..config.n_islands).map(|i| Island::new(i, config.population_size)).collect(),
            registry,
            seed,
            generated_count: 0,
            inserted_count: 0,
            discarded_count: 0,
            evaluated_count: 0,
            failed_count: 0,
            generation_budget: config.generation_budget,
            round_robin_cursor: 0,
            seeded: vec![false; config.n_islands],
            log: EventLog::default(),
        })
    }

    pub fn is_exhausted(&self) -> bool {
        self.generated_count >= self.generation_budget
    }

    /// Generates the next child for the island under the cursor, skipping
    /// (and logging) islands whose generation fails.
    pub fn next_work<R: Rng + ?Sized>(&mut self, config: &OperatorConfig, rng: &mut R) -> NextWork {
        if self.is_exhausted() {
            return NextWork::Exhausted;
        }
        for _ in 0..self.islands.len() {
            let island = self.round_robin_cursor;
            self.round_robin_cursor = (island + 1) % self.islands.len();
            match self.generate_for(island, config, rng) {
                Ok((mut genome, label)) => {
                    let generation_id = self.generated_count as u64;
                    genome.generation_id = generation_id;
                    genome.island_of_origin = island as u32;
                    self.generated_count += 1;
                    self.log.push(Event::Generated { island, generation_id, kind: label });
                    return NextWork::Work(GeneratedChild { genome, island, label });
                }
                Err(e) => {
                    self.discarded_count += 1;
                    self.log.push(Event::Discarded { island, reason: e.to_string() });
                }
            }
        }
        NextWork::Stalled
    }

    fn generate_for<R: Rng + ?Sized>(
        &mut self,
        island: usize,
        config: &OperatorConfig,
        rng: &mut R,
    ) -> Result<(RnnGenome, GenerationLabel), GenerationError> {
        if !self.islands[island].is_full() {
            if !self.seeded[island] {
                self.seeded[island] = true;
                return Ok((self.seed.unevaluated_copy(), GenerationLabel::Seed));
            }
            let (child, _, _) = mutate_with_retries(&self.seed, &mut self.registry, config, rng)?;
            return Ok((child, GenerationLabel::Bootstrap));
        }
        let populations: Vec<&[RnnGenome]> = self.islands.iter().map(|i| i.members.as_slice()).collect();
        let child = generate_child(&populations, island, config, &mut self.registry, rng)?;
        Ok((child.genome, child.kind.into()))
    }

    /// Integrates a trained child into its island of origin.
    pub fn insert_result(&mut self, genome: RnnGenome) -> Result<InsertOutcome, IslandError> {
        let Some(fitness) = genome.fitness.value() else {
            return Err(IslandError::Unevaluated(genome.generation_id));
        };
        let island = genome.island_of_origin as usize;
        if island >= self.islands.len() {
            return Err(IslandError::UnknownIsland { island: genome.island_of_origin, n_islands: self.islands.len() });
        }
        let generation_id = genome.generation_id;
        self.evaluated_count += 1;
        self.log.push(Event::Evaluated { island, generation_id, fitness });
        let outcome = self.islands[island].insert(genome);
        match outcome {
            InsertOutcome::Inserted { evicted } => {
                self.inserted_count += 1;
                self.log.push(Event::Inserted { island, generation_id, fitness, evicted });
            }
            InsertOutcome::Rejected => self.log.push(Event::Rejected { island, generation_id, fitness }),
        }
        Ok(outcome)
    }

    /// Records a child whose training failed for good.
    pub fn record_failure(&mut self, island: usize, generation_id: u64, reason: &str) {
        self.failed_count += 1;
        self.log.push(Event::Failed { island, generation_id, reason: reason.to_string() });
    }

    pub fn best_genome(&self) -> Option<&RnnGenome> {
        best_of(self.islands.iter().flat_map(|i| i.members.iter()))
    }

    pub fn best_fitness(&self) -> Option<f64> {
        self.best_genome().map(fitness_key)
    }

    pub fn population_summary(&self) -> PopulationSummary {
        summarize(&self.islands)
    }
}
