//! Per-cycle JSON-lines trace of step reports.

use std::io::{self, BufWriter, Write};

use syncsim_core::StepReport;

pub struct TraceWriter<W: Write> {
    out: BufWriter<W>,
    error: Option<io::Error>,
    lines: u64,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        Self {
            out: BufWriter::new(out),
            error: None,
            lines: 0,
        }
    }

    /// Writes one report as a JSON object on its own line. Quiet cycles
    /// without charged energy are skipped. The first I/O error is kept and
    /// later writes become no-ops.
    pub fn record(&mut self, report: &StepReport) {
        if self.error.is_some() || (report.is_quiet() && report.events.is_empty()) {
            return;
        }
        let res = serde_json::to_writer(&mut self.out, report)
            .map_err(io::Error::from)
            .and_then(|()| self.out.write_all(b"\n"));
        match res {
            Ok(()) => self.lines += 1,
            Err(e) => self.error = Some(e),
        }
    }

    pub fn lines(&self) -> u64 {
        self.lines
    }

    pub fn finish(mut self) -> io::Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use syncsim_core::config::default_config;
    use syncsim_core::experiment::prepare;

    #[test]
    fn every_line_is_a_report_object() {
        let mut c = default_config();
        c.micro.iters_per_thread = 3;
        let (mut sys, _) = prepare(&c).unwrap();
        let mut buf = Vec::new();
        let mut w = TraceWriter::new(&mut buf);
        sys.run_observed(|r| w.record(r)).unwrap();
        let n = w.lines();
        w.finish().unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count() as u64, n);
        let mut last = None;
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            let cycle = v["cycle"].as_u64().unwrap();
            assert!(last.is_none_or(|l| cycle > l));
            last = Some(cycle);
            assert!(v["transitions"].is_array() && v["events"].is_array());
        }
        assert!(n > 0);
    }
}
