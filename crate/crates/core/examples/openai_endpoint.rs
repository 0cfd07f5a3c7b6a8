//! Send one composed prompt to an OpenAI-compatible endpoint.
//!
//! Without `OPENAI_API_KEY` set this only prints the request body and makes
//! no network call.
//!
//!     OPENAI_API_KEY=... cargo run --example openai_endpoint

use synthkit::kg::{Topic, TopicSource};
use synthkit::llm::{chat_request_body, CompletionRequest, EndpointConfig, GenerationParams, LlmClient, OpenAiClient};
use synthkit::parsing::parse_reply;
use synthkit::promptkit::{compose, ComposeInput, TemplatePack};
use synthkit::PromptMode;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let task = synthkit::task::load_tasks(&std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/tasks.toml"))?
        .into_iter()
        .find(|t| t.id == "ncbi_disease")
        .expect("bundled task");
    let topic = Topic::entity("atrial fibrillation", "disease", TopicSource::Kg);
    let input = ComposeInput {
        task: &task,
        label: &task.labels[0],
        topic: Some(&topic),
        style: Some("patient-doctor dialogues"),
        mode: PromptMode::KnowledgeInfused,
        demos: None,
    };
    let prompt = compose(&TemplatePack::builtin(), input)?.first().clone();
    let params = GenerationParams::default();
    let config = EndpointConfig::default();

    let client = match OpenAiClient::from_env(&config) {
        Ok(c) => c,
        Err(e) => {
            println!("{e}; request body would be:");
            println!("{}", chat_request_body(&prompt.text, &params));
            return Ok(());
        }
    };
    let reply = client.complete(&CompletionRequest { prompt: &prompt, params: &params, stream: 0 })?;
    println!("{}\n{:?}", reply.text, reply.usage);
    match parse_reply(task.family, &reply.text) {
        Ok(p) => println!("{p:?}"),
        Err(r) => println!("rejected: {:?} {}", r.reason, r.detail),
    }
    Ok(())
}
