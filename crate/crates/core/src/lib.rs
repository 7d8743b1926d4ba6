//! Unsupervised anomaly detection on network flow metadata.
//!
//! The pipeline turns flow logs into per-dyad-hour token sequences, fits a
//! next-token language model (embedding, two stacked bidirectional LSTM
//! layers, dense, softmax) on sliding windows, and scores each dyad-hour by
//! its worst-predicted token (maximum multiclass log loss). Scored dyad-hours
//! are evaluated against attack labels with ROC/AUC.
//!
//! Modules follow the data path: [`ingest`] parses and de-duplicates flow
//! CSVs, [`tokenizer`] maps flows to tokens and owns the vocabulary,
//! [`sequencer`] groups tokens into dyad-hours and windows, [`neural`] is the
//! self-contained model core (exact BPTT gradients, Adam, serialization),
//! [`scorer`] and [`evaluator`] produce outlier scores and ROC curves,
//! [`experiments`] orchestrates the clean/dirty/NoDoS scenarios, and
//! [`synthgen`] emits labeled synthetic corpora for end-to-end verification.

pub mod evaluator;
pub mod experiments;
pub mod ingest;
pub mod kv;
pub mod neural;
mod par;
pub mod scorer;
pub mod sequencer;
pub mod synthgen;
pub mod tokenizer;
