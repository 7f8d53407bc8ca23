//! Deterministic templated corpus covering seven task domains, with
//! prepended, appended and plain dialogues.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dialogue, DialogueAct, DialogueKind, DialogueMode, DialogueTurn, Split};

pub const DOMAINS: [&str; 7] = [
    "restaurant",
    "hotel",
    "attraction",
    "train",
    "taxi",
    "police",
    "hospital",
];

fn act(domain: &str, act: &str, slots: &[(&str, &str)]) -> DialogueAct {
    DialogueAct {
        domain: domain.to_string(),
        act: act.to_string(),
        slots: slots
            .iter()
            .map(|(n, v)| (n.to_string(), v.to_string()))
            .collect(),
    }
}

fn lookup<'a>(table: &[(&str, &'a str)], key: &str) -> &'a str {
    table
        .iter()
        .find(|(k, _)| *k == key)
        .map(|(_, v)| *v)
        .expect("table covers every key")
}

/// One task-oriented episode plus the chit-chat lead-in used by prepended
/// dialogues.
struct Task {
    domain: &'static str,
    request: (String, Vec<DialogueAct>),
    offer: (String, Vec<DialogueAct>),
    question: String,
    answer: (String, Vec<DialogueAct>),
    lead_in: String,
    lead_in_reply: String,
    lead_in_transition: String,
}

fn draw_task(domain: &'static str, rng: &mut ChaCha8Rng) -> Task {
    let pick = |rng: &mut ChaCha8Rng, xs: &[&'static str]| *xs.choose(rng).expect("non-empty");
    match domain {
        "restaurant" => {
            let food = pick(rng, &["italian", "chinese", "indian"]);
            let area = pick(rng, &["centre", "north", "south"]);
            let name = lookup(
                &[("italian", "pizza hut"), ("chinese", "golden wok"), ("indian", "curry garden")],
                food,
            );
            let phone = lookup(
                &[("pizza hut", "01223323737"), ("golden wok", "01223350688"), ("curry garden", "01223302330")],
                name,
            );
            Task {
                domain,
                request: (
                    format!("i am looking for a {food} restaurant in the {area} ."),
                    vec![act(domain, "inform", &[("food", food), ("area", area)])],
                ),
                offer: (
                    format!("{name} is a nice {food} place in the {area} ."),
                    vec![act(domain, "recommend", &[("name", name), ("area", area)])],
                ),
                question: format!("what is the phone number of {name} ?"),
                answer: (
                    format!("the phone number of {name} is {phone} ."),
                    vec![act(domain, "inform", &[("phone", phone)])],
                ),
                lead_in: format!("my friends and i really love {food} food ."),
                lead_in_reply: format!("{food} food is delicious ."),
                lead_in_transition: format!("if you want , i could help you find a {food} restaurant ."),
            }
        }
        "hotel" => {
            let area = pick(rng, &["east", "west", "centre"]);
            let name = lookup(&[("east", "allenbell"), ("west", "hobsons house"), ("centre", "el shaddai")], area);
            let address = lookup(
                &[("allenbell", "517a coldham lane"), ("hobsons house", "96 barton road"), ("el shaddai", "41 warkworth street")],
                name,
            );
            Task {
                domain,
                request: (
                    format!("i need a hotel in the {area} with free parking ."),
                    vec![act(domain, "inform", &[("area", area), ("parking", "yes")])],
                ),
                offer: (
                    format!("{name} is in the {area} and has free parking ."),
                    vec![act(domain, "recommend", &[("name", name)])],
                ),
                question: format!("what is the address of {name} ?"),
                answer: (
                    format!("{name} is located at {address} ."),
                    vec![act(domain, "inform", &[("address", address)])],
                ),
                lead_in: format!("i am spending a quiet weekend in the {area} of town ."),
                lead_in_reply: "that sounds very relaxing .".into(),
                lead_in_transition: format!("would you like me to find you a hotel in the {area} ?"),
            }
        }
        "attraction" => {
            let kind = pick(rng, &["museum", "park", "theatre"]);
            let name = lookup(
                &[("museum", "broughton house gallery"), ("park", "cherry hinton water play"), ("theatre", "adc theatre")],
                kind,
            );
            let fee = lookup(&[("museum", "free"), ("park", "5 pounds"), ("theatre", "12 pounds")], kind);
            Task {
                domain,
                request: (
                    format!("can you recommend a {kind} to visit ?"),
                    vec![act(domain, "inform", &[("type", kind)])],
                ),
                offer: (
                    format!("you could visit {name} ."),
                    vec![act(domain, "recommend", &[("name", name)])],
                ),
                question: format!("what is the entrance fee for {name} ?"),
                answer: (
                    format!("the entrance fee is {fee} ."),
                    vec![act(domain, "inform", &[("fee", fee)])],
                ),
                lead_in: format!("i am bored and i want to see a {kind} ."),
                lead_in_reply: "i understand , everyone needs a break .".into(),
                lead_in_transition: format!("i could recommend a {kind} for you if you like ."),
            }
        }
        "train" => {
            let from = pick(rng, &["cambridge", "ely"]);
            let to = pick(rng, &["london kings cross", "stansted airport", "norwich"]);
            let day = pick(rng, &["monday", "friday"]);
            let id = match (from, day) {
                ("cambridge", "monday") => "tr1234",
                ("cambridge", _) => "tr5678",
                (_, "monday") => "tr2468",
                _ => "tr1357",
            };
            let price = lookup(&[("london kings cross", "23 pounds"), ("stansted airport", "10 pounds"), ("norwich", "17 pounds")], to);
            Task {
                domain,
                request: (
                    format!("i need a train from {from} to {to} on {day} ."),
                    vec![act(domain, "inform", &[("departure", from), ("destination", to), ("day", day)])],
                ),
                offer: (
                    format!("{id} leaves {from} on {day} morning ."),
                    vec![act(domain, "offer", &[("id", id)])],
                ),
                question: format!("how much is a ticket to {to} ?"),
                answer: (
                    format!("a ticket to {to} costs {price} ."),
                    vec![act(domain, "inform", &[("price", price)])],
                ),
                lead_in: format!("i will be enrolling in a new school at {to} next week . i am so nervous ."),
                lead_in_reply: "i hope you have fun at your new school .".into(),
                lead_in_transition: "if you want , i could help you book a train ticket .".into(),
            }
        }
        "taxi" => {
            let from = pick(rng, &["the station", "the grafton hotel"]);
            let to = pick(rng, &["the museum", "the airport", "the university"]);
            let car = lookup(&[("the museum", "red toyota"), ("the airport", "white honda"), ("the university", "black audi")], to);
            let phone = lookup(&[("red toyota", "07218068540"), ("white honda", "07654991002"), ("black audi", "07931543007")], car);
            Task {
                domain,
                request: (
                    format!("i need a taxi from {from} to {to} ."),
                    vec![act(domain, "inform", &[("departure", from), ("destination", to)])],
                ),
                offer: (
                    format!("i have booked a {car} to take you to {to} ."),
                    vec![act(domain, "book", &[("car", car)])],
                ),
                question: format!("what is the contact number of the {car} ?"),
                answer: (
                    format!("the contact number of the {car} is {phone} ."),
                    vec![act(domain, "inform", &[("phone", phone)])],
                ),
                lead_in: format!("i have a big meeting at {to} later today ."),
                lead_in_reply: "good luck with your meeting .".into(),
                lead_in_transition: format!("do you want me to book a taxi to {to} ?"),
            }
        }
        "police" => {
            let name = pick(rng, &["parkside", "mill road", "castle hill"]);
            let street = lookup(&[("parkside", "parkside road"), ("mill road", "mill road"), ("castle hill", "castle street")], name);
            let post = lookup(&[("parkside", "cb11jg"), ("mill road", "cb12ab"), ("castle hill", "cb30ax")], name);
            Task {
                domain,
                request: (
                    format!("do you know where the {name} police station is ?"),
                    vec![act(domain, "inform", &[("name", name)])],
                ),
                offer: (
                    format!("the {name} police station is on {street} ."),
                    vec![act(domain, "inform", &[("address", street)])],
                ),
                question: format!("can you give me the post code of the {name} police station ?"),
                answer: (
                    format!("hello , i can provide the post code for you ; it is {post} ."),
                    vec![act(domain, "inform", &[("post", post)])],
                ),
                lead_in: format!("someone stole my bike near {name} this morning ."),
                lead_in_reply: "i am so sorry to hear that .".into(),
                lead_in_transition: format!("would you like the address of the {name} police station ?"),
            }
        }
        _ => {
            let dept = pick(rng, &["cardiology", "neurology", "paediatrics"]);
            let floor = lookup(&[("cardiology", "first"), ("neurology", "second"), ("paediatrics", "third")], dept);
            let phone = lookup(&[("cardiology", "01223216895"), ("neurology", "01223217330"), ("paediatrics", "01223217301")], dept);
            Task {
                domain: "hospital",
                request: (
                    format!("i need the {dept} department of the hospital ."),
                    vec![act("hospital", "inform", &[("department", dept)])],
                ),
                offer: (
                    format!("the {dept} department is on the {floor} floor ."),
                    vec![act("hospital", "inform", &[("floor", floor)])],
                ),
                question: format!("what is the phone number of the {dept} department ?"),
                answer: (
                    format!("the {dept} department can be reached at {phone} ."),
                    vec![act("hospital", "inform", &[("phone", phone)])],
                ),
                lead_in: format!("my doctor told me to get a check up at {dept} soon ."),
                lead_in_reply: "i hope everything turns out fine .".into(),
                lead_in_transition: format!("shall i look up the {dept} department for you ?"),
            }
        }
    }
}

/// (user cue appended to the last task question, transition sentence,
/// follow-up user chit-chat, system reply)
const CUES: [(&str, &str, &str, &str); 3] = [
    (
        "i was robbed last night .",
        "what happened to you ?",
        "someone took my wallet on the bus .",
        "that is awful , i hope you get it back soon .",
    ),
    (
        "my sister is visiting me this weekend .",
        "are you excited to see her ?",
        "yes , we have not met for a whole year .",
        "that is wonderful , enjoy your time together .",
    ),
    (
        "i just got a new job .",
        "congratulations ! what will you be doing ?",
        "i will be teaching music at a small school .",
        "that sounds like a rewarding job .",
    ),
];

const SMALL_TALK: [(&str, &str); 6] = [
    ("i love hiking on weekends .", "hiking sounds like fun , where do you usually go ?"),
    ("the weather is so sunny today .", "i hope you can enjoy the sunshine ."),
    ("i watched a great comedy movie yesterday .", "i love comedy movies too , they always cheer me up ."),
    ("i have been learning to play the guitar .", "that is great , music is a wonderful hobby ."),
    ("my cat keeps waking me up at night .", "cats can be very playful at night ."),
    ("i am reading a book about space .", "space is fascinating , there is so much to learn ."),
];

const GREETING: (&str, &str) = ("hello , how are you today ?", "i am doing well , thank you for asking .");
const CLOSING: (&str, &str) = ("no , that is all i need . thanks .", "you are welcome . have a nice day .");

fn turn(text: &str, mode: DialogueMode, acts: Vec<DialogueAct>, user: bool) -> DialogueTurn {
    let mut t = if user {
        DialogueTurn::user(text, mode)
    } else {
        DialogueTurn::system(text, mode)
    };
    t.acts = acts;
    t
}

fn cc(turns: &mut Vec<DialogueTurn>, user: &str, system: &str) {
    turns.push(turn(user, DialogueMode::Chitchat, vec![], true));
    turns.push(turn(system, DialogueMode::Chitchat, vec![], false));
}

fn to_pair(turns: &mut Vec<DialogueTurn>, user: &(String, Vec<DialogueAct>), system: &(String, Vec<DialogueAct>)) {
    let mode = DialogueMode::Taskoriented;
    turns.push(turn(&user.0, mode, user.1.clone(), true));
    turns.push(turn(&system.0, mode, system.1.clone(), false));
}

fn question(task: &Task) -> (String, Vec<DialogueAct>) {
    (task.question.clone(), vec![])
}

fn small_talk(turns: &mut Vec<DialogueTurn>, rng: &mut ChaCha8Rng, n: usize) {
    let picks: Vec<&(&str, &str)> = SMALL_TALK.choose_multiple(rng, n).collect();
    for (u, s) in picks {
        cc(turns, u, s);
    }
}

/// `seed` fully determines the output. Dialogue `i` goes to the valid split
/// when `i % 10 == 8`, to test when `i % 10 == 9`, otherwise to train.
pub fn gen_synthetic_corpus(seed: u64, n: usize) -> Vec<Dialogue> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| gen_one(seed, i, &mut rng)).collect()
}

fn gen_one(seed: u64, i: usize, rng: &mut ChaCha8Rng) -> Dialogue {
    let split = match i % 10 {
        8 => Split::Valid,
        9 => Split::Test,
        _ => Split::Train,
    };
    let roll = rng.random_range(0..20);
    let kind = match roll {
        0..7 => DialogueKind::Prepended,
        7..14 => DialogueKind::Appended,
        _ => DialogueKind::Plain,
    };
    let primary = *DOMAINS.choose(rng).expect("non-empty");
    let task = draw_task(primary, rng);
    let extra = if rng.random_bool(0.25) {
        let other = loop {
            let d = *DOMAINS.choose(rng).expect("non-empty");
            if d != primary {
                break d;
            }
        };
        Some(draw_task(other, rng))
    } else {
        None
    };
    let mut domains = BTreeSet::new();
    let mut turns = Vec::new();
    let task_segment = |turns: &mut Vec<DialogueTurn>, domains: &mut BTreeSet<String>| {
        for t in std::iter::once(&task).chain(extra.as_ref()) {
            domains.insert(t.domain.to_string());
            to_pair(turns, &t.request, &t.offer);
        }
    };
    let last = extra.as_ref().unwrap_or(&task);
    match kind {
        DialogueKind::Prepended => {
            if rng.random_bool(0.5) {
                cc(&mut turns, GREETING.0, GREETING.1);
            }
            cc(&mut turns, &task.lead_in, &task.lead_in_reply);
            let idx = turns.len() - 1;
            turns[idx].is_transition_turn = true;
            turns[idx].transition_sentence = Some(task.lead_in_transition.clone());
            task_segment(&mut turns, &mut domains);
            to_pair(&mut turns, &question(last), &last.answer);
        }
        DialogueKind::Appended => {
            task_segment(&mut turns, &mut domains);
            let (cue, sentence, follow, reply) = *CUES.choose(rng).expect("non-empty");
            let q = (format!("{} {cue}", last.question), vec![]);
            to_pair(&mut turns, &q, &last.answer);
            let idx = turns.len() - 1;
            turns[idx].is_transition_turn = true;
            turns[idx].transition_sentence = Some(sentence.to_string());
            cc(&mut turns, follow, reply);
        }
        DialogueKind::Plain => {
            if rng.random_bool(0.5) {
                task_segment(&mut turns, &mut domains);
                to_pair(&mut turns, &question(last), &last.answer);
                let closing = (CLOSING.0.to_string(), vec![]);
                to_pair(&mut turns, &closing, &(CLOSING.1.to_string(), vec![]));
            } else {
                cc(&mut turns, GREETING.0, GREETING.1);
                let n = rng.random_range(1..=2);
                small_talk(&mut turns, rng, n);
            }
        }
    }
    Dialogue {
        id: format!("syn-{seed}-{i:05}"),
        kind,
        split,
        domains,
        turns,
    }
}
