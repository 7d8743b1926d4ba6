//! Deterministic generator of labeled synthetic flow corpora: benign
//! behavior profiles plus injected attack dyad-hours, for desk-scale
//! end-to-end verification.
//!
//! Attack signatures are sequence-anomalous rather than volume-anomalous:
//! floods repeat a byte bucket no benign profile emits, brute-force runs a
//! rigid byte pattern on the benign SSH port, and infiltration uses a
//! protocol/bucket combination with zero benign probability. Brute-force
//! deliberately shares port 22 with benign SSH, so service-port tokens alone
//! cannot separate it.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use thiserror::Error;

use crate::ingest::{write_flow_csv, FlowRecord, Label};
use crate::kv::{self, KvError};
use crate::par;

/// 2010-06-11T00:00:00Z; hour slots count forward from here.
pub const BASE_EPOCH: i64 = 1_276_214_400;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator config: {reason}")]
    InvalidConfig { reason: String },
    #[error("config: {0}")]
    Kv(#[from] KvError),
}

/// Fractions of attack dyad-hours per attack family; must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackMix {
    pub dos: f64,
    pub brute_ssh: f64,
    pub infil: f64,
}

impl Default for AttackMix {
    fn default() -> Self {
        AttackMix {
            dos: 0.4,
            brute_ssh: 0.4,
            infil: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub benign_dyad_hours: usize,
    pub attack_dyad_hours: usize,
    pub days: u32,
    pub attack_mix: AttackMix,
    pub ip_pool_size: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 42,
            benign_dyad_hours: 2000,
            attack_dyad_hours: 50,
            days: 7,
            attack_mix: AttackMix::default(),
            ip_pool_size: 64,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let mix = &self.attack_mix;
        let invalid = |reason: String| Err(SynthError::InvalidConfig { reason });
        if mix.dos < 0.0 || mix.brute_ssh < 0.0 || mix.infil < 0.0 {
            return invalid("attack mix fractions must be non-negative".to_string());
        }
        let sum = mix.dos + mix.brute_ssh + mix.infil;
        if (sum - 1.0).abs() > 1e-9 {
            return invalid(format!("attack mix fractions sum to {sum}, expected 1"));
        }
        if self.days == 0 {
            return invalid("days must be at least 1".to_string());
        }
        if self.ip_pool_size < 2 {
            return invalid("ip pool needs at least 2 addresses".to_string());
        }
        let dyads = self.ip_pool_size * (self.ip_pool_size - 1) / 2;
        let slots = dyads * (self.days as usize) * 24;
        let wanted = self.benign_dyad_hours + self.attack_dyad_hours;
        if wanted > slots {
            return invalid(format!(
                "{wanted} dyad-hours requested but only {slots} (dyad, hour) slots exist"
            ));
        }
        Ok(())
    }

    pub fn from_kv(text: &str) -> Result<SynthConfig, SynthError> {
        let mut cfg = SynthConfig::default();
        for (key, value) in kv::parse_kv(text)? {
            cfg.apply_kv_pair(&key, &value)?;
        }
        Ok(cfg)
    }

    pub fn apply_kv_pair(&mut self, key: &str, value: &str) -> Result<(), SynthError> {
        use crate::kv::bad_value;
        macro_rules! parse {
            ($ty:ty, $what:expr) => {
                value
                    .parse::<$ty>()
                    .map_err(|_| bad_value(key, value, $what))?
            };
        }
        match key {
            "seed" => self.seed = parse!(u64, "expected unsigned integer"),
            "benign_dyad_hours" => {
                self.benign_dyad_hours = parse!(usize, "expected non-negative integer")
            }
            "attack_dyad_hours" => {
                self.attack_dyad_hours = parse!(usize, "expected non-negative integer")
            }
            "days" => self.days = parse!(u32, "expected positive integer"),
            "mix_dos" => self.attack_mix.dos = parse!(f64, "expected fraction"),
            "mix_brute_ssh" => self.attack_mix.brute_ssh = parse!(f64, "expected fraction"),
            "mix_infil" => self.attack_mix.infil = parse!(f64, "expected fraction"),
            "ip_pool_size" => self.ip_pool_size = parse!(usize, "expected integer >= 2"),
            _ => {
                return Err(KvError::UnknownKey {
                    key: key.to_string(),
                }
                .into())
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum SlotKind {
    Web,
    Dns,
    SshInteractive,
    /// Long benign transfer session; its flow counts overlap the attack
    /// profiles' so volume alone cannot separate the classes.
    Bulk,
    Dos,
    BruteSsh,
    Infil,
}

/// (protocol, byte bucket) pairs every benign profile can emit.
pub fn benign_proto_buckets() -> Vec<(&'static str, u32)> {
    let mut pairs: Vec<(&'static str, u32)> = (WEB_BUCKETS.0..=WEB_BUCKETS.1)
        .chain(SSH_BUCKETS.0..=SSH_BUCKETS.1)
        .chain(BULK_BUCKETS.0..=BULK_BUCKETS.1)
        .map(|b| ("TCP", b))
        .collect();
    pairs.extend((DNS_BUCKETS.0..=DNS_BUCKETS.1).map(|b| ("UDP", b)));
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

/// (protocol, byte bucket) pairs infiltration attacks use; disjoint from
/// every benign profile by construction.
pub fn infil_proto_buckets() -> Vec<(&'static str, u32)> {
    (INFIL_BUCKETS.0..=INFIL_BUCKETS.1)
        .map(|b| ("ICMP", b))
        .collect()
}

const WEB_BUCKETS: (u32, u32) = (8, 14);
const DNS_BUCKETS: (u32, u32) = (5, 7);
const SSH_BUCKETS: (u32, u32) = (6, 10);
const BULK_BUCKETS: (u32, u32) = (9, 14);
const DOS_BUCKETS: (u32, u32) = (2, 3);
/// Rigid alternation for brute-force SSH; bucket 5 never occurs on benign
/// TCP, bucket 9 does, so the pattern (not just the tokens) is the signature.
const BRUTE_PATTERN: [u32; 2] = [5, 9];
const INFIL_BUCKETS: (u32, u32) = (15, 18);

fn ip_name(idx: usize) -> String {
    format!("10.0.{}.{}", idx / 200, idx % 200 + 1)
}

fn bucket_bytes(rng: &mut ChaCha8Rng, bucket: u32) -> u64 {
    let lo = 1u64 << bucket;
    rng.gen_range(lo..2 * lo)
}

fn split_bytes(rng: &mut ChaCha8Rng, total: u64) -> (u64, u64) {
    let src = rng.gen_range(0..=total);
    (src, total - src)
}

fn walk(rng: &mut ChaCha8Rng, current: u32, range: (u32, u32)) -> u32 {
    let step: i64 = *[-1, 0, 1].choose(rng).unwrap();
    (current as i64 + step).clamp(range.0 as i64, range.1 as i64) as u32
}

struct Slot {
    kind: SlotKind,
    client: usize,
    server: usize,
    hour: usize,
}

fn flow(
    start_time: i64,
    duration_s: u64,
    src: (&str, u16),
    dst: (&str, u16),
    protocol: &str,
    bytes: (u64, u64),
    tag: Label,
) -> FlowRecord {
    FlowRecord {
        start_time,
        duration_s,
        ip_a: src.0.to_string(),
        ip_b: dst.0.to_string(),
        protocol: protocol.to_string(),
        port_a: src.1,
        port_b: dst.1,
        bytes_src: bytes.0,
        bytes_dst: bytes.1,
        tag,
    }
}

fn generate_slot(slot: &Slot, rng: &mut ChaCha8Rng) -> Vec<FlowRecord> {
    let client_ip = ip_name(slot.client);
    let server_ip = ip_name(slot.server);
    let base = BASE_EPOCH + slot.hour as i64 * 3600;

    let (flow_count, tag) = match slot.kind {
        SlotKind::Web | SlotKind::Dns | SlotKind::SshInteractive => {
            (rng.gen_range(4..=20), Label::Normal)
        }
        SlotKind::Bulk => (rng.gen_range(50..=300), Label::Normal),
        SlotKind::Dos => (rng.gen_range(200..=500), Label::Attack),
        SlotKind::BruteSsh => (rng.gen_range(50..=150), Label::Attack),
        SlotKind::Infil => (rng.gen_range(5..=20), Label::Attack),
    };
    let mut seconds = rand::seq::index::sample(rng, 3600, flow_count).into_vec();
    seconds.sort_unstable();

    let dos_bucket = rng.gen_range(DOS_BUCKETS.0..=DOS_BUCKETS.1);
    let web_port = *[80u16, 443].choose(rng).unwrap();
    let mut bucket = match slot.kind {
        SlotKind::Web => rng.gen_range(WEB_BUCKETS.0..=WEB_BUCKETS.1),
        SlotKind::Dns => rng.gen_range(DNS_BUCKETS.0..=DNS_BUCKETS.1),
        SlotKind::SshInteractive => rng.gen_range(SSH_BUCKETS.0..=SSH_BUCKETS.1),
        SlotKind::Bulk => rng.gen_range(BULK_BUCKETS.0..=BULK_BUCKETS.1),
        _ => 0,
    };

    let mut records = Vec::with_capacity(flow_count);
    for (t, &sec) in seconds.iter().enumerate() {
        let start = base + sec as i64;
        let ephemeral: u16 = rng.gen_range(20_000..=60_000);
        let record = match slot.kind {
            SlotKind::Web | SlotKind::Dns | SlotKind::SshInteractive | SlotKind::Bulk => {
                let (protocol, service, range) = match slot.kind {
                    SlotKind::Web => ("TCP", web_port, WEB_BUCKETS),
                    SlotKind::Dns => ("UDP", 53, DNS_BUCKETS),
                    SlotKind::Bulk => ("TCP", web_port, BULK_BUCKETS),
                    _ => ("TCP", 22, SSH_BUCKETS),
                };
                let total = bucket_bytes(rng, bucket);
                let bytes = split_bytes(rng, total);
                bucket = walk(rng, bucket, range);
                let duration = rng.gen_range(0..=30);
                if rng.gen::<bool>() {
                    flow(start, duration, (&client_ip, ephemeral), (&server_ip, service), protocol, bytes, tag)
                } else {
                    flow(start, duration, (&server_ip, service), (&client_ip, ephemeral), protocol, bytes, tag)
                }
            }
            SlotKind::Dos => {
                // Near-identical low-byte flood at one service port.
                let total = (1u64 << dos_bucket) + rng.gen_range(0..=3);
                let bytes = split_bytes(rng, total);
                flow(start, 0, (&client_ip, ephemeral), (&server_ip, 80), "TCP", bytes, tag)
            }
            SlotKind::BruteSsh => {
                let b = BRUTE_PATTERN[t % BRUTE_PATTERN.len()];
                let total = bucket_bytes(rng, b);
                let bytes = split_bytes(rng, total);
                let duration = rng.gen_range(0..=5);
                if rng.gen::<bool>() {
                    flow(start, duration, (&client_ip, ephemeral), (&server_ip, 22), "TCP", bytes, tag)
                } else {
                    flow(start, duration, (&server_ip, 22), (&client_ip, ephemeral), "TCP", bytes, tag)
                }
            }
            SlotKind::Infil => {
                let b = rng.gen_range(INFIL_BUCKETS.0..=INFIL_BUCKETS.1);
                let total = bucket_bytes(rng, b);
                let bytes = split_bytes(rng, total);
                flow(start, rng.gen_range(0..=10), (&client_ip, 0), (&server_ip, 0), "ICMP", bytes, tag)
            }
        };
        records.push(record);
    }
    records
}

/// Split `total` attack dyad-hours across the mix by largest remainder.
fn attack_counts(mix: &AttackMix, total: usize) -> [usize; 3] {
    let raw = [
        mix.dos * total as f64,
        mix.brute_ssh * total as f64,
        mix.infil * total as f64,
    ];
    let mut counts = [0usize; 3];
    let mut assigned = 0;
    for (c, r) in counts.iter_mut().zip(raw) {
        *c = r.floor() as usize;
        assigned += *c;
    }
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        (raw[b] - raw[b].floor())
            .partial_cmp(&(raw[a] - raw[a].floor()))
            .unwrap()
            .then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take(total - assigned) {
        counts[i] += 1;
    }
    counts
}

/// Generate the corpus as canonical flow CSV text. Identical configs produce
/// byte-identical output; each dyad-hour draws from its own seeded substream,
/// so generation parallelizes without changing the result.
pub fn generate(cfg: &SynthConfig) -> Result<String, SynthError> {
    cfg.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Assign distinct (dyad, hour) slots so benign and attack dyad-hours
    // never collide; collisions would silently relabel benign sequences.
    let dyads: Vec<(usize, usize)> = (0..cfg.ip_pool_size)
        .flat_map(|i| ((i + 1)..cfg.ip_pool_size).map(move |j| (i, j)))
        .collect();
    let hours = cfg.days as usize * 24;
    let total = cfg.benign_dyad_hours + cfg.attack_dyad_hours;
    let mut taken: HashSet<(usize, usize)> = HashSet::with_capacity(total);
    let mut picks = Vec::with_capacity(total);
    while picks.len() < total {
        let mut dyad = master.gen_range(0..dyads.len());
        let mut hour = master.gen_range(0..hours);
        // Capacity was validated, so a linear probe always lands.
        while !taken.insert((dyad, hour)) {
            hour += 1;
            if hour == hours {
                hour = 0;
                dyad = (dyad + 1) % dyads.len();
            }
        }
        picks.push((dyad, hour));
    }

    let [n_dos, n_brute, n_infil] = attack_counts(&cfg.attack_mix, cfg.attack_dyad_hours);
    let mut slots = Vec::with_capacity(total);
    for (idx, &(dyad, hour)) in picks.iter().enumerate() {
        let kind = if idx < cfg.benign_dyad_hours {
            let roll: f64 = master.gen();
            if roll < 0.45 {
                SlotKind::Web
            } else if roll < 0.70 {
                SlotKind::Dns
            } else if roll < 0.90 {
                SlotKind::SshInteractive
            } else {
                SlotKind::Bulk
            }
        } else {
            let a = idx - cfg.benign_dyad_hours;
            if a < n_dos {
                SlotKind::Dos
            } else if a < n_dos + n_brute {
                SlotKind::BruteSsh
            } else {
                debug_assert!(a < n_dos + n_brute + n_infil);
                SlotKind::Infil
            }
        };
        let (client, server) = dyads[dyad];
        slots.push(Slot {
            kind,
            client,
            server,
            hour,
        });
    }

    let seed = cfg.seed;
    let per_slot: Vec<Vec<FlowRecord>> = par::map_indexed(&slots, move |idx, slot| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1 + idx as u64);
        generate_slot(slot, &mut rng)
    });

    let mut records: Vec<FlowRecord> = per_slot.into_iter().flatten().collect();
    records.sort_by(|a, b| {
        (a.start_time, &a.ip_a, &a.ip_b, a.port_a, a.port_b, a.bytes_src).cmp(&(
            b.start_time,
            &b.ip_a,
            &b.ip_b,
            b.port_a,
            b.port_b,
            b.bytes_src,
        ))
    });

    let mut out = Vec::new();
    write_flow_csv(&records, &mut out).expect("writing to memory cannot fail");
    Ok(String::from_utf8(out).expect("canonical csv is utf-8"))
}
