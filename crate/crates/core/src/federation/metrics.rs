use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One line of a run's metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub round: usize,
    pub phase: String,
    pub match_loss: Option<f64>,
    pub overall_acc: Option<f64>,
    pub client_id: Option<usize>,
    pub client_acc: Option<f64>,
    pub msg_up_bytes: u64,
    pub msg_down_bytes: u64,
}

impl MetricsRow {
    pub fn new(round: usize, phase: &str) -> Self {
        Self {
            round,
            phase: phase.to_string(),
            match_loss: None,
            overall_acc: None,
            client_id: None,
            client_acc: None,
            msg_up_bytes: 0,
            msg_down_bytes: 0,
        }
    }

    pub fn loss(mut self, v: f64) -> Self {
        self.match_loss = Some(v);
        self
    }

    pub fn overall(mut self, v: Option<f64>) -> Self {
        self.overall_acc = v;
        self
    }

    pub fn client(mut self, id: usize, acc: Option<f64>) -> Self {
        self.client_id = Some(id);
        self.client_acc = acc;
        self
    }

    pub fn bytes(mut self, (up, down): (u64, u64)) -> Self {
        self.msg_up_bytes = up;
        self.msg_down_bytes = down;
        self
    }
}

/// Receives rows as a run produces them. `end_round` marks a point where
/// buffered output should reach its destination.
pub trait MetricsSink {
    fn emit(&mut self, row: MetricsRow) -> Result<()>;

    fn end_round(&mut self) -> Result<()> {
        Ok(())
    }
}

impl MetricsSink for Vec<MetricsRow> {
    fn emit(&mut self, row: MetricsRow) -> Result<()> {
        self.push(row);
        Ok(())
    }
}

/// Discards everything.
pub struct NullSink;

impl MetricsSink for NullSink {
    fn emit(&mut self, _: MetricsRow) -> Result<()> {
        Ok(())
    }
}

pub struct CsvSink<W: Write> {
    writer: csv::Writer<W>,
}

impl<W: Write> CsvSink<W> {
    pub fn new(inner: W) -> Self {
        Self {
            writer: csv::Writer::from_writer(inner),
        }
    }

    pub fn into_inner(self) -> Result<W> {
        self.writer
            .into_inner()
            .map_err(|e| crate::Error::Invalid(format!("flushing metrics: {}", e.error())))
    }
}

impl<W: Write> MetricsSink for CsvSink<W> {
    fn emit(&mut self, row: MetricsRow) -> Result<()> {
        self.writer.serialize(row)?;
        Ok(())
    }

    fn end_round(&mut self) -> Result<()> {
        self.writer.flush().map_err(|e| crate::Error::Csv(e.into()))
    }
}

/// Forwards every row to two sinks.
pub struct Tee<'a, 'b>(pub &'a mut dyn MetricsSink, pub &'b mut dyn MetricsSink);

impl MetricsSink for Tee<'_, '_> {
    fn emit(&mut self, row: MetricsRow) -> Result<()> {
        self.0.emit(row.clone())?;
        self.1.emit(row)
    }

    fn end_round(&mut self) -> Result<()> {
        self.0.end_round()?;
        self.1.end_round()
    }
}

pub fn read_metrics(text: &str) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    Ok(reader.deserialize().collect::<std::result::Result<Vec<MetricsRow>, _>>()?)
}
