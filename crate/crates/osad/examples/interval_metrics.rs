//! Interval-aware precision/recall, greedy matching and delay moments.

use osad::detect::{AlertInterval, StreamKind};
use osad::eval::{
    delay_stats, interval_precision, interval_recall, match_intervals, LabelClass, LabelSet,
};
use osad::model::SampleInterval;

fn pred(start: usize, end: usize) -> AlertInterval {
    AlertInterval {
        interval: SampleInterval::new(start, end).unwrap(),
        stream: StreamKind::Selective,
        peak_stat: 0.0,
    }
}

fn main() -> osad::Result<()> {
    let labels = LabelSet::new(
        vec![
            SampleInterval::new(100, 200)?,
            SampleInterval::new(400, 520)?,
            SampleInterval::new(800, 880)?,
        ],
        LabelClass::Other,
    )?;
    let preds = vec![pred(95, 210), pred(430, 500), pred(900, 950)];

    println!(
        "labels: {:?}",
        labels.intervals().iter().map(|iv| (iv.start, iv.end)).collect::<Vec<_>>()
    );
    println!(
        "preds:  {:?}",
        preds.iter().map(|p| (p.start(), p.end())).collect::<Vec<_>>()
    );
    println!("precision = {:.4}", interval_precision(&labels, &preds)?);
    println!("recall    = {:.4}", interval_recall(&labels, &preds)?);

    let pairs = match_intervals(&labels, &preds);
    println!("\ngreedy max-overlap matching:");
    for (l, p) in &pairs {
        println!(
            "  label [{}, {}) <-> pred [{}, {}), overlap {}",
            l.start,
            l.end,
            p.start,
            p.end,
            l.overlap(p)
        );
    }

    let d = delay_stats(&pairs, 200.0)?;
    println!(
        "\ndelays over {} pairs at 200 Hz:\n  start: mean {:+.4} s, std {:.4} s\n  end:   mean {:+.4} s, std {:.4} s",
        d.pairs, d.mean_a, d.std_a, d.mean_b, d.std_b
    );
    println!("(positive start delay = the prediction began before the label)");

    // splitting a prediction into touching halves changes nothing:
    // overlaps are counted sample by sample
    let mut split = vec![pred(95, 150), pred(150, 210), pred(430, 500), pred(900, 950)];
    split.rotate_left(1);
    println!(
        "\nafter splitting and permuting predictions: precision = {:.4}, recall = {:.4}",
        interval_precision(&labels, &split)?,
        interval_recall(&labels, &split)?
    );
    Ok(())
}
