//! nDCG@k / Recall@k over a run, and token F1 over answers.
//!
//! cargo run --example evaluate

use std::collections::BTreeMap;

use ski::evaluation::{evaluate_generation, evaluate_retrieval, ndcg_at_k, token_f1, Qrels};
use ski::retrieval::read_run;

fn main() -> ski::Result<()> {
    let qrels = Qrels::read(
        "query-id\tcorpus-id\tscore\nq1\td3\t1\nq2\ta\t2\nq2\tb\t1\n".as_bytes(),
        "inline".as_ref(),
    )?;
    let run = read_run(
        "q1 Q0 d1 1 3.0 demo\nq1 Q0 d2 2 2.0 demo\nq1 Q0 d3 3 1.0 demo\nq2 Q0 b 1 5.0 demo\nq2 Q0 a 2 4.0 demo\n".as_bytes(),
        "inline".as_ref(),
    )?;
    let report = evaluate_retrieval(&run, &qrels, &[1, 3, 10])?;
    report.write_summary(std::io::stdout().lock()).expect("stdout");

    let judged = qrels.get("q1").expect("judged");
    println!("single relevant at rank 3: nDCG@10 = {}", ndcg_at_k(&["d1", "d2", "d3"], judged, 10)?);

    println!("F1(\"Unseld\", \"Westley Sissel Unseld\") = {}", token_f1("Unseld", "Westley Sissel Unseld"));
    let preds = BTreeMap::from([("q1".to_string(), "The Lorman, Mississippi".to_string())]);
    let golds = BTreeMap::from([("q1".to_string(), vec!["Lorman".to_string(), "Lorman, Mississippi".to_string()])]);
    let gen = evaluate_generation(&preds, &golds)?;
    println!("best-of-golds F1 = {}", gen.macro_avg["f1"]);
    Ok(())
}
