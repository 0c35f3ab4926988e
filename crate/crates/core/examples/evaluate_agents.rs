//! Score several agents on a generated suite and compare two metric columns.

use std::sync::Arc;

use convtest::demo::{demo_config, order_support_backend};
use convtest::eval::{
    pearson, render_table, AlwaysReplyAgent, GoldReplayAgent, LlmAgent, Metric, TableFormat, TokenF1,
};
use convtest::llm::{GenerationParams, LlmClient};
use convtest::pipeline::{read_reports, Pipeline};

fn main() -> anyhow::Result<()> {
    let tmp = tempfile::tempdir()?;
    let client = LlmClient::new(Arc::new(order_support_backend()), 4);
    let pipeline = Pipeline::create(tmp.path(), demo_config("eval"), client.clone())?;
    pipeline.run()?;

    let eval = pipeline.config().eval_config();
    let rule_based = LlmAgent::new("rule-based", client, GenerationParams::default());
    pipeline.evaluate(&GoldReplayAgent, &eval, &TokenF1)?;
    pipeline.evaluate(&AlwaysReplyAgent::default(), &eval, &TokenF1)?;
    pipeline.evaluate(&rule_based, &eval, &TokenF1)?;

    let reports = read_reports(tmp.path(), "eval")?;
    println!("{}", render_table(reports.iter().map(|(k, v)| (k.as_str(), v)), TableFormat::Text));

    let column = |m: Metric| -> Vec<f64> { reports.values().map(|r| r.get(m).value.unwrap_or(0.0)).collect() };
    match pearson(&column(Metric::ApiRecall), &column(Metric::TestCorrect)) {
        Ok(r) => println!("pearson r, api recall vs test correct: {r:.3}"),
        Err(e) => println!("no correlation: {e}"),
    }
    Ok(())
}
