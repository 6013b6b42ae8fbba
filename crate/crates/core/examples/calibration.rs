//! Confidence calibration: split answers by stated confidence and
//! correctness at the 75% threshold.

use metacog_eval::analysis::{
    calibrate, calibrate_groups, CalibrationItem, CalibrationMode, DEFAULT_THRESHOLD,
};

fn items(spec: &[(usize, f64, bool)]) -> Vec<CalibrationItem> {
    spec.iter()
        .flat_map(|&(n, confidence, correct)| {
            (0..n).map(move |_| CalibrationItem {
                confidence: Some(confidence),
                correct,
            })
        })
        .collect()
}

fn main() {
    // High-correct, high-incorrect, low-incorrect, low-correct.
    let all = items(&[
        (556, 90.0, true),
        (325, 80.0, false),
        (68, 50.0, false),
        (51, 60.0, true),
    ]);
    let m = calibrate(&all, DEFAULT_THRESHOLD);
    print!("{}", m.to_tsv());
    print!("\n{}", m.to_plot_csv());

    // Pooled counts weight big groups more; macro averages group shares.
    let groups = vec![
        items(&[(90, 95.0, true), (10, 95.0, false)]),
        items(&[(2, 40.0, true), (8, 40.0, false)]),
    ];
    for mode in [CalibrationMode::Pooled, CalibrationMode::Macro] {
        let m = calibrate_groups(&groups, DEFAULT_THRESHOLD, mode);
        println!(
            "\n{mode:?}: TP {:.1} FP {:.1} TN {:.1} FN {:.1}",
            m.tp_pct, m.fp_pct, m.tn_pct, m.fn_pct
        );
    }
}
