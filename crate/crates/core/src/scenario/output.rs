//! Result files: per-packet CSV and the key=value summary.

use std::fmt::Write as _;
use std::io::{self, Write};

use super::RunReport;
use crate::mplsctl::LspKind;
use crate::netshell::DeliveryRecord;

pub const PACKETS_CSV_HEADER: &str = "flow_id,packet_id,created_at,arrived_at,delay,jitter";

pub fn write_packets_csv(out: &mut impl Write, records: &[DeliveryRecord]) -> io::Result<()> {
    writeln!(out, "{PACKETS_CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{:.9},{:.9},{:.9},{:.9}",
            r.flow, r.packet_id, r.created_at, r.arrived_at, r.delay, r.jitter
        )?;
    }
    Ok(())
}

fn time(t: Option<f64>) -> String {
    t.map_or_else(|| "none".into(), |t| format!("{t:.9}"))
}

/// One `key=value` line per metric, in a fixed order. Wall-clock runtime is
/// left out so equal runs give equal files.
pub fn summary_text(report: &RunReport) -> String {
    let mut s = String::new();
    let mut kv = |key: String, value: String| {
        let _ = writeln!(s, "{key}={value}");
    };
    kv("seed".into(), report.seed.to_string());
    kv("end".into(), format!("{:.9}", report.end));
    kv("events".into(), report.events.to_string());
    for (name, n) in &report.event_counts {
        kv(format!("events.{name}"), n.to_string());
    }
    for f in &report.flows {
        let p = format!("flow.{}", f.flow);
        kv(format!("{p}.sent"), f.sent.to_string());
        kv(format!("{p}.received"), f.received.to_string());
        kv(format!("{p}.dropped"), f.dropped.to_string());
        kv(format!("{p}.in_flight"), f.in_flight.to_string());
        kv(format!("{p}.mean_delay"), format!("{:.9}", f.mean_delay));
        kv(format!("{p}.max_delay"), format!("{:.9}", f.max_delay));
        kv(format!("{p}.mean_jitter"), format!("{:.9}", f.mean_jitter));
        kv(format!("{p}.max_jitter"), format!("{:.9}", f.max_jitter));
    }
    for l in &report.links {
        let p = format!("link.{}-{}", l.from, l.to);
        kv(format!("{p}.drops"), l.drops.to_string());
        kv(format!("{p}.utilization"), format!("{:.9}", l.utilization));
    }
    for (kind, n) in &report.control_created {
        kv(format!("control.{}.created", kind.as_str()), n.to_string());
    }
    kv("control.sent".into(), report.control_sent.to_string());
    kv("control.delivered".into(), report.control_delivered.to_string());
    kv("control.dropped".into(), report.control_dropped.to_string());
    kv("control.stale".into(), report.stale_messages.to_string());
    kv("lib_misses".into(), report.lib_misses.to_string());
    for l in &report.lsps {
        let p = format!("lsp.{}", l.id);
        let kind = match l.kind {
            LspKind::Primary => "PRIMARY".to_string(),
            LspKind::Backup { protects, .. } => format!("BACKUP(protects={protects})"),
        };
        kv(format!("{p}.kind"), kind);
        kv(format!("{p}.state"), l.state.to_string());
        kv(format!("{p}.up_at"), time(l.up_at));
        if let Some(e) = &l.error {
            kv(format!("{p}.error"), e.clone());
        }
    }
    for (i, f) in report.failures.iter().enumerate() {
        let p = format!("failure.{}", i + 1);
        kv(format!("{p}.link"), format!("{}-{}", f.spec.a, f.spec.b));
        kv(format!("{p}.fail_at"), format!("{:.9}", f.spec.fail_at));
        kv(format!("{p}.restore_at"), time(f.spec.restore_at));
        kv(format!("{p}.detected_at"), time(f.detected_at));
        kv(
            format!("{p}.detected_by"),
            f.detected_by.map_or_else(|| "none".into(), |n| n.to_string()),
        );
        kv(format!("{p}.window_drops"), f.window_drops.to_string());
        kv(format!("{p}.spliced"), f.spliced.to_string());
    }
    for (i, d) in report.detections.iter().enumerate() {
        let p = format!("detection.{}", i + 1);
        kv(format!("{p}.time"), format!("{:.9}", d.time));
        kv(format!("{p}.adjacency"), format!("{}-{}", d.node, d.neighbor));
        kv(format!("{p}.spliced"), d.spliced.to_string());
        kv(format!("{p}.unprotected"), d.unprotected.to_string());
    }
    for (i, sp) in report.splices.iter().enumerate() {
        let p = format!("splice.{}", i + 1);
        kv(format!("{p}.time"), format!("{:.9}", sp.time));
        kv(format!("{p}.node"), sp.node.to_string());
        kv(format!("{p}.lsp"), sp.primary.to_string());
        kv(format!("{p}.backup"), sp.backup.to_string());
        kv(format!("{p}.next"), format!("{}->{}", sp.old_next, sp.new_next));
    }
    kv("recoveries".into(), report.recoveries.len().to_string());
    s
}

pub fn write_summary(out: &mut impl Write, report: &RunReport) -> io::Result<()> {
    out.write_all(summary_text(report).as_bytes())
}
