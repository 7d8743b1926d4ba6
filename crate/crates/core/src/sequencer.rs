//! Grouping tokenized flows into undirected dyad-hours and expanding them
//! into fixed-width, left-padded prediction windows.

use std::collections::BTreeMap;
use std::io::Write;

use crate::ingest::{FlowRecord, Label};
use crate::tokenizer::{FeatureScheme, Vocabulary, PAD};

/// Undirected IP pair in canonical lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DyadKey {
    pub ip_lo: String,
    pub ip_hi: String,
}

impl DyadKey {
    pub fn new(a: &str, b: &str) -> DyadKey {
        if a <= b {
            DyadKey {
                ip_lo: a.to_string(),
                ip_hi: b.to_string(),
            }
        } else {
            DyadKey {
                ip_lo: b.to_string(),
                ip_hi: a.to_string(),
            }
        }
    }
}

/// All flows between one dyad within one calendar-hour bucket, tokenized and
/// ordered. The label is derived from the contributing records' tags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DyadHour {
    pub key: DyadKey,
    pub hour: i64,
    pub token_indices: Vec<u32>,
    pub label: Label,
}

/// Fixed-width context (left-padded with PAD) and the token it predicts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    pub context: Vec<u32>,
    pub target: u32,
}

/// How record tags aggregate to a dyad-hour label. `Any` flags the dyad-hour
/// on a single attack record; `Majority` requires attack records to outnumber
/// normal ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LabelRule {
    #[default]
    Any,
    Majority,
}

impl LabelRule {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelRule::Any => "any",
            LabelRule::Majority => "majority",
        }
    }

    pub fn parse(s: &str) -> Option<LabelRule> {
        match s {
            "any" => Some(LabelRule::Any),
            "majority" => Some(LabelRule::Majority),
            _ => None,
        }
    }
}

pub fn epoch_hour(start_time: i64) -> i64 {
    start_time.div_euclid(3600)
}

/// Group records into dyad-hours. Within each group, records sort by
/// (start_time, duration, bytes_src, bytes_dst, port_a, port_b) so sequence
/// order is reproducible under any input permutation. Output is ordered by
/// (dyad, hour).
pub fn group_dyad_hours(
    records: &[FlowRecord],
    scheme: &FeatureScheme,
    vocab: &Vocabulary,
    rule: LabelRule,
) -> Vec<DyadHour> {
    let mut groups: BTreeMap<(DyadKey, i64), Vec<&FlowRecord>> = BTreeMap::new();
    for record in records {
        let key = DyadKey::new(&record.ip_a, &record.ip_b);
        groups
            .entry((key, epoch_hour(record.start_time)))
            .or_default()
            .push(record);
    }

    groups
        .into_iter()
        .map(|((key, hour), mut members)| {
            members.sort_by(|a, b| {
                (
                    a.start_time,
                    a.duration_s,
                    a.bytes_src,
                    a.bytes_dst,
                    a.port_a,
                    a.port_b,
                )
                    .cmp(&(
                        b.start_time,
                        b.duration_s,
                        b.bytes_src,
                        b.bytes_dst,
                        b.port_a,
                        b.port_b,
                    ))
            });
            let token_indices = members
                .iter()
                .map(|r| vocab.encode(&scheme.token(r)))
                .collect();
            let attack_count = members.iter().filter(|r| r.tag == Label::Attack).count();
            let label = match rule {
                LabelRule::Any if attack_count >= 1 => Label::Attack,
                LabelRule::Majority if attack_count * 2 > members.len() => Label::Attack,
                _ => Label::Normal,
            };
            DyadHour {
                key,
                hour,
                token_indices,
                label,
            }
        })
        .collect()
}

/// One window per token: window t targets token t with the up-to-`width`
/// preceding tokens right-aligned and left-padded with PAD. The first window
/// of every dyad-hour has an all-PAD context.
pub fn windows(dh: &DyadHour, width: usize) -> Vec<Window> {
    assert!(width >= 1, "window width must be at least 1");
    let tokens = &dh.token_indices;
    (0..tokens.len())
        .map(|t| {
            let lo = t.saturating_sub(width);
            let ctx = &tokens[lo..t];
            let mut context = vec![PAD; width - ctx.len()];
            context.extend_from_slice(ctx);
            Window {
                context,
                target: tokens[t],
            }
        })
        .collect()
}

/// Debug export, one line per dyad-hour:
/// `ip_lo,ip_hi,hour,label,token_1|token_2|...` with decoded token strings.
pub fn write_dyad_hours<W: Write>(
    dyad_hours: &[DyadHour],
    vocab: &Vocabulary,
    mut out: W,
) -> std::io::Result<()> {
    for dh in dyad_hours {
        let tokens: Vec<&str> = dh
            .token_indices
            .iter()
            .map(|&i| vocab.token_at(i).unwrap_or("?"))
            .collect();
        writeln!(
            out,
            "{},{},{},{},{}",
            dh.key.ip_lo,
            dh.key.ip_hi,
            dh.hour,
            dh.label.as_str(),
            tokens.join("|")
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::FeatureScheme;

    fn flow(a: &str, b: &str, start: i64, tag: Label) -> FlowRecord {
        FlowRecord {
            start_time: start,
            duration_s: 1,
            ip_a: a.into(),
            ip_b: b.into(),
            protocol: "TCP".into(),
            port_a: 40000,
            port_b: 80,
            bytes_src: 512,
            bytes_dst: 512,
            tag,
        }
    }

    fn setup(records: &[FlowRecord]) -> (FeatureScheme, Vocabulary) {
        let scheme = FeatureScheme::proto_byte();
        let vocab = Vocabulary::build(records.iter().map(|r| scheme.token(r)));
        (scheme, vocab)
    }

    #[test]
    fn dyads_are_undirected() {
        let records = vec![
            flow("10.0.0.1", "10.0.0.2", 36900, Label::Normal), // 10:15
            flow("10.0.0.2", "10.0.0.1", 38700, Label::Normal), // 10:45
        ];
        let (scheme, vocab) = setup(&records);
        let dhs = group_dyad_hours(&records, &scheme, &vocab, LabelRule::Any);
        assert_eq!(dhs.len(), 1);
        assert_eq!(dhs[0].token_indices.len(), 2);
    }

    #[test]
    fn hour_boundary_splits_groups() {
        let records = vec![
            flow("10.0.0.1", "10.0.0.2", 39540, Label::Normal), // 10:59
            flow("10.0.0.1", "10.0.0.2", 39660, Label::Normal), // 11:01
        ];
        let (scheme, vocab) = setup(&records);
        let dhs = group_dyad_hours(&records, &scheme, &vocab, LabelRule::Any);
        assert_eq!(dhs.len(), 2);
    }

    #[test]
    fn any_attack_record_flags_the_dyad_hour() {
        let mut records: Vec<_> = (0..5)
            .map(|i| flow("a", "b", 100 + i, Label::Normal))
            .collect();
        records[3].tag = Label::Attack;
        let (scheme, vocab) = setup(&records);
        let dhs = group_dyad_hours(&records, &scheme, &vocab, LabelRule::Any);
        assert_eq!(dhs[0].label, Label::Attack);
        // Majority rule: 1 of 5 attack records is not a majority.
        let dhs = group_dyad_hours(&records, &scheme, &vocab, LabelRule::Majority);
        assert_eq!(dhs[0].label, Label::Normal);
    }

    #[test]
    fn grouping_is_permutation_invariant() {
        let mut records = vec![
            flow("a", "b", 103, Label::Normal),
            flow("a", "b", 101, Label::Attack),
            flow("c", "d", 7300, Label::Normal),
            flow("a", "b", 101, Label::Normal),
        ];
        records[3].bytes_src = 9; // distinct tie-break from records[1]
        let (scheme, vocab) = setup(&records);
        let forward = group_dyad_hours(&records, &scheme, &vocab, LabelRule::Any);
        records.reverse();
        let reversed = group_dyad_hours(&records, &scheme, &vocab, LabelRule::Any);
        assert_eq!(forward, reversed);
    }

    #[test]
    fn windows_single_token_is_all_pad() {
        let dh = DyadHour {
            key: DyadKey::new("a", "b"),
            hour: 0,
            token_indices: vec![5],
            label: Label::Normal,
        };
        let ws = windows(&dh, 10);
        assert_eq!(ws.len(), 1);
        assert_eq!(ws[0].context, vec![0; 10]);
        assert_eq!(ws[0].target, 5);
    }

    #[test]
    fn windows_pad_left_and_slide() {
        let dh = DyadHour {
            key: DyadKey::new("a", "b"),
            hour: 0,
            token_indices: vec![2, 3, 4],
            label: Label::Normal,
        };
        let ws = windows(&dh, 10);
        assert_eq!(ws.len(), 3);
        assert_eq!(ws[2].context, vec![0, 0, 0, 0, 0, 0, 0, 0, 2, 3]);
        assert_eq!(ws[2].target, 4);
    }

    #[test]
    fn windows_full_context_past_width() {
        let tokens: Vec<u32> = (2..14).collect(); // 12 tokens
        let dh = DyadHour {
            key: DyadKey::new("a", "b"),
            hour: 0,
            token_indices: tokens.clone(),
            label: Label::Normal,
        };
        let ws = windows(&dh, 10);
        assert_eq!(ws.len(), 12);
        assert_eq!(ws[11].context, tokens[1..11].to_vec());
        assert_eq!(ws[11].target, tokens[11]);
    }

    #[test]
    fn window_targets_reproduce_sequence() {
        let dh = DyadHour {
            key: DyadKey::new("a", "b"),
            hour: 0,
            token_indices: vec![2, 5, 3, 3, 7],
            label: Label::Normal,
        };
        let targets: Vec<u32> = windows(&dh, 3).iter().map(|w| w.target).collect();
        assert_eq!(targets, dh.token_indices);
    }

    #[test]
    fn debug_export_format() {
        let records = vec![
            flow("10.0.0.2", "10.0.0.1", 3600, Label::Attack),
            flow("10.0.0.1", "10.0.0.2", 3700, Label::Normal),
        ];
        let (scheme, vocab) = setup(&records);
        let dhs = group_dyad_hours(&records, &scheme, &vocab, LabelRule::Any);
        let mut buf = Vec::new();
        write_dyad_hours(&dhs, &vocab, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "10.0.0.1,10.0.0.2,1,Attack,TCP:10|TCP:10\n"
        );
    }
}
