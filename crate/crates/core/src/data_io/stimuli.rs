//! Per-timestep input spikes, stored as CSV: `t,label,s0,s1,...`. An empty
//! label marks an unlabeled step.

use std::fmt::Write as _;

use super::{csv_records, parse_field, DataError};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StimulusStep {
    pub t: u64,
    pub label: Option<usize>,
    pub spikes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StimuliSet {
    pub width: usize,
    pub steps: Vec<StimulusStep>,
}

impl StimuliSet {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,label");
        for k in 0..self.width {
            write!(out, ",s{k}").unwrap();
        }
        out.push('\n');
        for step in &self.steps {
            write!(out, "{},", step.t).unwrap();
            if let Some(l) = step.label {
                write!(out, "{l}").unwrap();
            }
            for s in &step.spikes {
                write!(out, ",{s}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Parses a stimuli file for a network with `inputs` input neurons and
/// `outputs` output neurons.
pub fn parse_stimuli(text: &str, inputs: usize, outputs: usize) -> Result<StimuliSet, DataError> {
    let mut steps = vec![];
    for (line, rec) in csv_records(text, true)? {
        if rec.len() != inputs + 2 {
            return Err(DataError::WidthMismatch { line, expected: inputs, found: rec.len().saturating_sub(2) });
        }
        let t = parse_field(line, "t", &rec[0])?;
        let label = match &rec[1] {
            "" => None,
            raw => {
                let l: usize = parse_field(line, "label", raw)?;
                if l >= outputs {
                    return Err(DataError::IndexOverflow { line, field: "label", value: l, limit: outputs });
                }
                Some(l)
            }
        };
        let spikes = rec
            .iter()
            .skip(2)
            .map(|v| match v {
                "0" => Ok(0),
                "1" => Ok(1),
                other => Err(DataError::NonBinary { line, value: other.to_string() }),
            })
            .collect::<Result<Vec<u8>, _>>()?;
        steps.push(StimulusStep { t, label, spikes });
    }
    Ok(StimuliSet { width: inputs, steps })
}
