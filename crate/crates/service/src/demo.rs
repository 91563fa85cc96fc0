//! Templated demo corpus: four customer-service scenes with enough lexical
//! spread for the mining pipeline to separate them.

use std::io::{self, Write};

use agentcoach_core::corpus::{DialogueRecord, Role, TurnRecord};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const DEMO_SEED: u64 = 7;
pub const DIALOGUES_PER_SCENE: usize = 15;

/// Deliberately broken line so ingestion has something to reject.
pub const MALFORMED_LINE: &str = r#"{"id":"broken-001","turns":[{"role":"robot","text":"beep"}]}"#;

struct SceneTemplate {
    name: &'static str,
    fills: &'static [&'static str],
    /// Alternating customer/agent slots; `{x}` takes the dialogue's fill.
    slots: &'static [&'static [&'static str]],
}

const SCENES: [SceneTemplate; 4] = [
    SceneTemplate {
        name: "refund",
        fills: &["headphones", "blender", "jacket", "coffee maker", "phone case"],
        slots: &[
            &[
                "hi i want a refund for my {x}",
                "hello i need to return my {x} and get my money back",
                "i would like my money back for the {x} i bought",
            ],
            &[
                "hello, thank you for contacting us. i can help with the refund. may i have your order number please",
                "hello and thanks for reaching out. i can help you return it. could you share your order number",
            ],
            &[
                "the order number is 4471",
                "sure, it is order 9920",
                "my order number is 1385",
            ],
            &[
                "thank you. i found the {x} in your order. was it damaged or not as described",
                "thanks, i see the {x}. could you tell me what was wrong with it",
            ],
            &[
                "it arrived broken",
                "the {x} stopped working after two days",
                "it was not what the listing described",
            ],
            &[
                "i am sorry about that. i have issued a full refund to your original payment method",
                "sorry for the trouble. a full refund is now on its way to your card",
            ],
            &[
                "how long will the refund take",
                "when will i see the money back",
            ],
            &[
                "the refund will appear within five business days. is there anything else i can help with",
                "you should see the refund in three to five business days. anything else i can help you with today",
            ],
            &[
                "no that is all, thank you",
                "that is everything, thanks for the help",
            ],
        ],
    },
    SceneTemplate {
        name: "delivery",
        fills: &["sofa", "laptop", "parcel", "bookshelf", "washing machine"],
        slots: &[
            &[
                "hello my {x} delivery is late",
                "my {x} has not arrived yet and the tracking has not moved",
                "where is my {x}, the delivery was due yesterday",
            ],
            &[
                "hello, thanks for getting in touch. i am sorry the delivery is late. can you give me the tracking number",
                "hi, sorry to hear the shipment is delayed. what is the tracking number please",
            ],
            &[
                "the tracking number is zx 5521",
                "tracking says zx 7710",
                "it is zx 3302",
            ],
            &[
                "thanks. the courier shows the {x} is held at the local depot because of bad weather",
                "i checked with the courier and your {x} is delayed at the sorting hub",
            ],
            &[
                "when will it be delivered then",
                "so when can i expect the {x}",
                "can you speed it up",
            ],
            &[
                "the courier expects to deliver it tomorrow before noon. i have added a priority flag to the shipment",
                "it is scheduled for delivery tomorrow morning and i have marked the shipment as priority",
            ],
            &[
                "will i get a notification",
                "can i get a text when it is out for delivery",
            ],
            &[
                "yes, you will get a text when the driver is on the way. is there anything else i can help with",
                "you will receive a tracking text once it is out for delivery. anything else i can help you with today",
            ],
            &[
                "no that is all, thank you",
                "great, thanks a lot",
            ],
        ],
    },
    SceneTemplate {
        name: "password",
        fills: &["email", "banking app", "web portal", "mobile app", "rewards account"],
        slots: &[
            &[
                "hi i forgot my password and cannot log in to the {x}",
                "i am locked out of my account on the {x}",
                "my password reset link for the {x} does not work",
            ],
            &[
                "hello, i can help you get back into your account. please confirm the email address on the account",
                "hi, let us get you signed in again. what email address is linked to your login",
            ],
            &[
                "it is jordan at example dot com",
                "the account email is sam at example dot com",
                "i use alex at example dot com",
            ],
            &[
                "thank you. i have verified the account and sent a new reset link to that email",
                "thanks, the identity check passed and a fresh reset link is in your inbox",
            ],
            &[
                "the link says it has expired",
                "i got the link but the {x} still rejects my login",
                "ok i see the email now",
            ],
            &[
                "reset links last fifteen minutes. i have sent another one, please open it right away and choose a new password",
                "please use the newest link within fifteen minutes and pick a new password with at least eight characters",
            ],
            &[
                "done, i can log in now",
                "that worked, i am signed in",
            ],
            &[
                "glad to hear it. for security consider turning on two factor login. is there anything else i can help with",
                "great. i recommend enabling two factor login for extra security. anything else i can help you with today",
            ],
            &[
                "no that is all, thank you",
                "nothing else, thanks",
            ],
        ],
    },
    SceneTemplate {
        name: "address",
        fills: &["billing", "shipping", "home", "office", "mailing"],
        slots: &[
            &[
                "hello i moved and need to change my {x} address",
                "i need to update the {x} address on my account",
                "can you change my {x} address please, i have a new flat",
            ],
            &[
                "hello, happy to update that for you. what is the new street address and postcode",
                "hi, congratulations on the move. please tell me the new street and postcode",
            ],
            &[
                "it is 12 river street, postcode 40211",
                "the new address is 8 hill road, postcode 73002",
                "5 station lane, postcode 11840",
            ],
            &[
                "thank you. should this new address also apply to orders that are already on the way",
                "thanks. do you want open orders redirected to the new address too",
            ],
            &[
                "yes please redirect my open orders",
                "only future orders please",
                "yes, the {x} address for everything",
            ],
            &[
                "done. your {x} address is updated and the change is effective immediately",
                "all set, the {x} address on your account now shows the new street and postcode",
            ],
            &[
                "will i get a confirmation",
                "do i need to do anything else",
            ],
            &[
                "a confirmation email is on its way to you. is there anything else i can help with",
                "you will receive a confirmation email shortly. anything else i can help you with today",
            ],
            &[
                "no that is all, thank you",
                "no, thanks for the quick help",
            ],
        ],
    },
];

pub fn scene_names() -> Vec<&'static str> {
    SCENES.iter().map(|s| s.name).collect()
}

/// Raw dialogue records, scenes interleaved so file order carries no label.
pub fn demo_dialogues(per_scene: usize, seed: u64) -> Vec<DialogueRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..per_scene {
        for scene in &SCENES {
            let fill = scene.fills[i % scene.fills.len()];
            let turns = scene
                .slots
                .iter()
                .enumerate()
                .map(|(k, variants)| TurnRecord {
                    role: if k % 2 == 0 { Role::Customer } else { Role::Agent },
                    text: variants.choose(&mut rng).expect("non-empty slot").replace("{x}", fill),
                })
                .collect();
            out.push(DialogueRecord {
                id: format!("{}-{:03}", scene.name, i + 1),
                scene: None,
                turns,
            });
        }
    }
    out
}

/// Writes the demo log, with [`MALFORMED_LINE`] as line 3.
pub fn write_demo_log<W: Write>(mut w: W, per_scene: usize, seed: u64) -> io::Result<()> {
    for (i, rec) in demo_dialogues(per_scene, seed).iter().enumerate() {
        if i == 2 {
            writeln!(w, "{MALFORMED_LINE}")?;
        }
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub const DEMO_RULES: &str = r#"{"rule_id":"greeting","kind":"required_opening","pattern":"\\b(hello|hi|good (morning|afternoon|evening))\\b","message":"Open the conversation with a greeting"}
{"rule_id":"offer-help","kind":"required_closing","pattern":"anything else|have a (nice|good|great) day","message":"Offer further help before the conversation ends"}
{"rule_id":"no-rudeness","kind":"forbidden_pattern","pattern":"\\b(shut up|stupid|whatever)\\b","message":"Do not be rude to the customer"}
"#;

#[cfg(test)]
mod tests {
    use super::*;
    use agentcoach_core::corpus::read_dialogues;
    use std::io::Cursor;

    #[test]
    fn log_has_one_bad_line_and_valid_dialogues() {
        let mut buf = Vec::new();
        write_demo_log(&mut buf, 3, DEMO_SEED).unwrap();
        let rep = read_dialogues(Cursor::new(buf)).unwrap();
        assert_eq!(rep.items.len(), 12);
        assert_eq!(rep.errors.len(), 1);
        assert_eq!(rep.errors[0].line, 3);
        assert!(rep.items.iter().all(|d| d.turns().len() == 9));
    }

    #[test]
    fn same_seed_same_corpus() {
        assert_eq!(demo_dialogues(4, 1), demo_dialogues(4, 1));
        assert_ne!(demo_dialogues(4, 1), demo_dialogues(4, 2));
    }

    #[test]
    fn rules_parse() {
        let rules = agentcoach_core::scorecard::load_rules(Cursor::new(DEMO_RULES)).unwrap();
        assert_eq!(rules.len(), 3);
    }
}
