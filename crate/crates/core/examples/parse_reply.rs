//! Parses model replies in the shapes models tend to produce.
//!
//!     cargo run --example parse_reply

use actagent::agent::parse_response;

fn main() {
    for reply in [
        r#"{"thinking":"skip","action_code":"js:app.player.next()","final_step":true}"#,
        "Here you go:\n```json\n{\"thinking\":\"mute\",\"action_code\":\"js:app.player.volume = 0\",\"final_step\":true}\n```",
        r#"{"thinking":"no such feature","action_code":"N/A: the app cannot print","final_step":true}"#,
        r#"{"thinking":"t","action_code":"python:print(1)","final_step":true}"#,
        "I am not sure what to do.",
    ] {
        match parse_response(reply) {
            Ok(r) => println!("ok    {}", r.to_json()),
            Err(e) => println!("error {e}"),
        }
    }
}
