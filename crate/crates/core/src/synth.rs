//! Synthetic data for tests, benchmarks and the bundled fixture.
//!
//! Typing sessions record, for every snapshot, which characters were typed
//! while entering an embedded PII string, so leak checks do not depend on
//! the detectors they are checking.

use nalgebra::DMatrix;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use std::collections::BTreeMap;

use crate::features::Platform;
use crate::keystroke::KeystrokeEvent;
use crate::modeling::{DomainData, LexiconModel, OutcomeData, OutcomeKind};

const WORDS: &[&str] = &[
    "ok", "see", "you", "at", "the", "store", "call", "me", "later", "thanks", "yeah", "can",
    "we", "meet", "tomorrow", "my", "number", "is", "send", "it", "to", "mail", "home", "soon",
    "love", "fun", "weekend", "dinner", "work", "running", "late", "sure", "what", "time",
];

const AUTOCORRECT: &[(&str, &str)] = &[
    ("teh", "the"),
    ("adn", "and"),
    ("recieve", "receive"),
    ("tomorow", "tomorrow"),
    ("thx", "thanks"),
    ("u", "you"),
];

const TYPO_CHARS: &[char] = &['a', 'x', 'q', '1', '7', '0', 'm', '-'];

/// One generated entry: events plus per-snapshot PII provenance.
#[derive(Debug, Clone)]
pub struct TypingSession {
    pub events: Vec<KeystrokeEvent>,
    /// `pii_mask[i][c]` is true when char `c` of event `i` was typed as PII.
    pub pii_mask: Vec<Vec<bool>>,
    pub pii_strings: Vec<String>,
    /// Raw text of the last non-empty snapshot.
    pub final_text: String,
}

fn random_pii(rng: &mut impl Rng) -> String {
    let d = |rng: &mut dyn rand::RngCore, n: usize| -> String {
        (0..n).map(|_| char::from(b'0' + rng.random_range(0..10u8))).collect()
    };
    match rng.random_range(0..6) {
        0 => format!("{}-{}-{}", d(rng, 3), d(rng, 3), d(rng, 4)),
        1 => format!("({}) {}-{}", d(rng, 3), d(rng, 3), d(rng, 4)),
        2 => format!("{}.{}.{}", d(rng, 3), d(rng, 3), d(rng, 4)),
        3 => format!("{}-{}-{}", d(rng, 3), d(rng, 2), d(rng, 4)),
        _ => {
            let users = ["bob", "jane.doe", "kim_22", "al+x", "t.s"];
            let hosts = ["example.com", "mail.org", "uni.edu", "web.net"];
            format!("{}@{}", users.choose(rng).unwrap(), hosts.choose(rng).unwrap())
        }
    }
}

struct Typist {
    chars: Vec<char>,
    mask: Vec<bool>,
    ts: i64,
    events: Vec<KeystrokeEvent>,
    masks: Vec<Vec<bool>>,
    user: String,
    app: String,
}

impl Typist {
    fn emit(&mut self, rng: &mut impl Rng) {
        self.ts += rng.random_range(50..400);
        self.events.push(KeystrokeEvent {
            user_id: self.user.clone(),
            timestamp: self.ts,
            app_id: self.app.clone(),
            current_text: self.chars.iter().collect(),
            is_password: false,
            is_phone_field: false,
        });
        self.masks.push(self.mask.clone());
    }

    fn push(&mut self, c: char, pii: bool, rng: &mut impl Rng) {
        self.chars.push(c);
        self.mask.push(pii);
        self.emit(rng);
    }

    fn backspace(&mut self, rng: &mut impl Rng) {
        if self.chars.pop().is_some() {
            self.mask.pop();
            self.emit(rng);
        }
    }

    /// Type `s` with random typos and short backspace runs.
    fn type_str(&mut self, s: &str, pii: bool, rng: &mut impl Rng) {
        let target: Vec<char> = s.chars().collect();
        let mut i = 0;
        while i < target.len() {
            let roll: f64 = rng.random();
            // never empty the field mid-entry: that would end the entry
            if roll < 0.06 && !self.chars.is_empty() {
                let typo = *TYPO_CHARS.choose(rng).unwrap();
                self.push(typo, pii, rng);
                self.backspace(rng);
            } else if roll < 0.10 && i > 0 && self.chars.len() > 1 {
                let back = rng.random_range(1..=i.min(3).min(self.chars.len() - 1));
                for _ in 0..back {
                    self.backspace(rng);
                }
                i -= back;
            } else {
                self.push(target[i], pii, rng);
                i += 1;
            }
        }
    }
}

/// Generate one typing session that ends with the field being cleared.
pub fn typing_session(seed: u64) -> TypingSession {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Typist {
        chars: Vec::new(),
        mask: Vec::new(),
        ts: 1_600_000_000_000 + seed as i64 * 1000,
        events: Vec::new(),
        masks: Vec::new(),
        user: format!("user{}", seed % 7),
        app: "com.google.android.apps.messaging".into(),
    };
    let n_words = rng.random_range(3..12);
    let n_pii = rng.random_range(1..=2);
    let pii_slots: Vec<usize> = (0..n_pii).map(|_| rng.random_range(0..=n_words)).collect();
    let mut pii_strings = Vec::new();

    for w in 0..=n_words {
        for _ in pii_slots.iter().filter(|&&s| s == w) {
            let pii = random_pii(&mut rng);
            t.type_str(&pii, true, &mut rng);
            t.push(' ', false, &mut rng);
            pii_strings.push(pii);
        }
        if w == n_words {
            break;
        }
        if rng.random_bool(0.15) {
            // autocorrect replaces a misspelled word when the space lands
            let (wrong, right) = *AUTOCORRECT.choose(&mut rng).unwrap();
            t.type_str(wrong, false, &mut rng);
            for _ in 0..wrong.chars().count() {
                t.chars.pop();
                t.mask.pop();
            }
            for c in right.chars().chain(std::iter::once(' ')) {
                t.chars.push(c);
                t.mask.push(false);
            }
            t.emit(&mut rng);
        } else {
            let word = *WORDS.choose(&mut rng).unwrap();
            t.type_str(word, false, &mut rng);
            let end = if rng.random_bool(0.1) { '.' } else { ' ' };
            t.push(end, false, &mut rng);
        }
    }
    // drop trailing whitespace sometimes so the last token is left open
    if rng.random_bool(0.5) {
        t.backspace(&mut rng);
    }
    let final_text: String = t.chars.iter().collect();
    t.chars.clear();
    t.mask.clear();
    t.emit(&mut rng);

    TypingSession {
        events: t.events,
        pii_mask: t.masks,
        pii_strings,
        final_text,
    }
}

/// Two platform matrices over the same users and a continuous outcome.
/// The first `signal_features` columns of each platform in `signal_on`
/// carry the outcome plus noise; everything else is noise. With
/// `identical`, both platforms share one matrix.
#[derive(Debug, Clone, Copy)]
pub struct PlantedDesign {
    pub users: usize,
    pub features: usize,
    pub signal_features: usize,
    pub noise: f64,
    pub signal_on: Option<Platform>,
    pub identical: bool,
}

impl Default for PlantedDesign {
    fn default() -> Self {
        Self {
            users: 40,
            features: 12,
            signal_features: 3,
            noise: 0.5,
            signal_on: Some(Platform::Facebook),
            identical: false,
        }
    }
}

pub fn planted_domains(design: &PlantedDesign, seed: u64) -> (DomainData, DomainData, OutcomeData) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = design.users;
    let y: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let draw = |signal: bool, rng: &mut ChaCha8Rng| {
        DMatrix::from_fn(n, design.features, |i, j| {
            let e: f64 = StandardNormal.sample(rng);
            if signal && j < design.signal_features {
                y[i] + design.noise * e
            } else {
                e
            }
        })
    };
    let x_fb = draw(design.signal_on == Some(Platform::Facebook), &mut rng);
    let x_sms = if design.identical {
        x_fb.clone()
    } else {
        draw(design.signal_on == Some(Platform::Sms), &mut rng)
    };
    let users: Vec<String> = (0..n).map(|i| format!("u{i:03}")).collect();
    let features: Vec<String> = (0..design.features).map(|j| format!("f{j:02}")).collect();
    let domain = |platform, x| DomainData {
        platform,
        users: users.clone(),
        features: features.clone(),
        x,
    };
    (
        domain(Platform::Facebook, x_fb),
        domain(Platform::Sms, x_sms),
        OutcomeData {
            name: "outcome".into(),
            kind: OutcomeKind::Continuous,
            values: y,
        },
    )
}

/// Random non-negative matrix with entries in [0, 1).
pub fn random_nonnegative(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DMatrix::from_fn(rows, cols, |_, _| rng.random::<f64>())
}

/// Truth plus two independent equal-variance noisy estimates of it.
pub fn null_estimates(n: usize, noise: f64, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let noisy = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        truth
            .iter()
            .map(|t| {
                let e: f64 = StandardNormal.sample(rng);
                t + noise * e
            })
            .collect()
    };
    let a = noisy(&mut rng);
    let b = noisy(&mut rng);
    (a, b, truth)
}

pub const MESSAGING_APP: &str = "com.google.android.apps.messaging";

const BASE: &[&str] = &[
    "i", "you", "the", "a", "to", "and", "it", "is", "was", "we", "that", "so", "just", "have",
    "are", "can", "do", "will", "at", "in", "on", "for", "my", "me", "this", "be", "with", "what",
    "going", "now", "today", "know", "get", "time", "back", "good",
];
const FB_WORDS: &[&str] = &[
    "amazing", "friends", "birthday", "photos", "congrats", "everyone", "beautiful", "proud",
    "#blessed", "!",
];
const SMS_WORDS: &[&str] = &["ok", "u", "lol", "omw", "?", "yeah", "home", "k", "pick", "call"];
/// (low pole, high pole) word lists per latent trait.
const TRAITS: &[(&[&str], &[&str])] = &[
    (&["omg", "class", "party", "bro", "exam"], &["work", "kids", "family", "meeting", "taxes"]),
    (&["game", "dude", "beer", "bro"], &["love", "cute", "sweet", "hugs"]),
    (&["great", "happy", "awesome", "excited"], &["tired", "alone", "sad", "sorry"]),
];

/// One synthetic participant.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureUser {
    pub user_id: String,
    pub age: f64,
    /// ±1
    pub gender: f64,
    pub depression: f64,
    pub life_satisfaction: f64,
    pub stress: f64,
}

impl FixtureUser {
    pub const OUTCOMES: [&'static str; 5] =
        ["age", "gender", "depression", "life_satisfaction", "stress"];

    pub fn outcome(&self, name: &str) -> Option<f64> {
        Some(match name {
            "age" => self.age,
            "gender" => self.gender,
            "depression" => self.depression,
            "life_satisfaction" => self.life_satisfaction,
            "stress" => self.stress,
            _ => return None,
        })
    }

    /// Position of the user on each trait, scaled to [0, 1].
    fn poles(&self) -> [f64; 3] {
        let sig = |v: f64| 1.0 / (1.0 + (-1.5 * v).exp());
        [
            ((self.age - 18.0) / 47.0).clamp(0.0, 1.0),
            (self.gender + 1.0) / 2.0,
            sig(self.depression),
        ]
    }
}

/// Raw inputs of a complete synthetic study.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub users: Vec<FixtureUser>,
    /// Keystroke snapshots of SMS messages plus unrelated app traffic.
    pub keystrokes: Vec<KeystrokeEvent>,
    /// (user_id, post text)
    pub facebook: Vec<(String, String)>,
    pub lexica: Vec<LexiconModel>,
    pub dictionary: String,
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

fn sentence(
    user: &FixtureUser,
    platform: Platform,
    words: usize,
    rng: &mut ChaCha8Rng,
) -> String {
    let poles = user.poles();
    let mut out: Vec<&str> = Vec::with_capacity(words + 2);
    for _ in 0..words {
        let roll: f64 = rng.random();
        let w = if roll < 0.25 {
            let t = rng.random_range(0..TRAITS.len());
            let (low, high) = TRAITS[t];
            let side = if rng.random_bool(poles[t]) { high } else { low };
            *side.choose(rng).unwrap()
        } else if roll < 0.42 {
            let list = match platform {
                Platform::Facebook => FB_WORDS,
                Platform::Sms => SMS_WORDS,
            };
            *list.choose(rng).unwrap()
        } else {
            *BASE.choose(rng).unwrap()
        };
        out.push(w);
    }
    if platform == Platform::Facebook && rng.random_bool(0.3) {
        let at = rng.random_range(0..=out.len());
        out.splice(at..at, ["fun", "weekend"]);
    }
    let mut text = out.join(" ");
    if rng.random_bool(0.06) {
        let pii = random_pii(rng);
        text = match platform {
            Platform::Sms => format!("{text} call me at {pii}"),
            Platform::Facebook => format!("{text} contact {pii}"),
        };
    }
    text
}

fn type_message(t: &mut Typist, text: &str, rng: &mut ChaCha8Rng) {
    t.type_str(text, false, rng);
    // sending clears the field
    t.chars.clear();
    t.mask.clear();
    t.emit(rng);
    t.ts += rng.random_range(60_000..3_600_000);
}

/// Deterministic study with `n_users` participants. Users differ in latent
/// traits that shift word choice on both platforms; the bigram
/// "fun weekend" only ever appears on Facebook.
pub fn fixture(n_users: usize, seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut users = Vec::with_capacity(n_users);
    for i in 0..n_users {
        let depression: f64 = StandardNormal.sample(&mut rng);
        let e1: f64 = StandardNormal.sample(&mut rng);
        let e2: f64 = StandardNormal.sample(&mut rng);
        users.push(FixtureUser {
            user_id: format!("p{:02}", i + 1),
            age: round3(rng.random_range(18.0..65.0)),
            gender: if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            depression: round3(depression),
            life_satisfaction: round3(-0.6 * depression + 0.8 * e1),
            stress: round3(0.5 * depression + 0.85 * e2),
        });
    }

    let mut keystrokes = Vec::new();
    let mut facebook = Vec::new();
    for user in &users {
        let mut t = Typist {
            chars: Vec::new(),
            mask: Vec::new(),
            ts: 1_600_000_000_000 + rng.random_range(0..86_400_000),
            events: Vec::new(),
            masks: Vec::new(),
            user: user.user_id.clone(),
            app: MESSAGING_APP.into(),
        };
        for _ in 0..rng.random_range(22..34) {
            let words = rng.random_range(3..9);
            let msg = sentence(user, Platform::Sms, words, &mut rng);
            type_message(&mut t, &msg, &mut rng);
        }
        // traffic outside the messaging app
        t.app = "com.android.chrome".into();
        type_message(&mut t, "weather tomorrow", &mut rng);
        t.app = "com.example.bank".into();
        for c in "hunter22".chars() {
            t.chars.push(c);
            t.ts += 120;
            t.events.push(KeystrokeEvent {
                user_id: t.user.clone(),
                timestamp: t.ts,
                app_id: t.app.clone(),
                current_text: t.chars.iter().collect(),
                is_password: true,
                is_phone_field: false,
            });
        }
        keystrokes.extend(t.events);

        for _ in 0..rng.random_range(28..48) {
            let words = rng.random_range(8..17);
            facebook.push((user.user_id.clone(), sentence(user, Platform::Facebook, words, &mut rng)));
        }
    }

    let weights = |pairs: &[(&str, f64)]| -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    };
    let lexica = vec![
        LexiconModel {
            outcome: "age".into(),
            weights: weights(&[
                ("work", 300.0), ("kids", 300.0), ("family", 250.0), ("meeting", 250.0),
                ("taxes", 250.0), ("omg", -300.0), ("class", -250.0), ("party", -250.0),
                ("bro", -200.0), ("exam", -250.0), ("lol", -50.0),
            ]),
            intercept: 38.0,
        },
        LexiconModel {
            outcome: "gender".into(),
            weights: weights(&[
                ("love", 40.0), ("cute", 40.0), ("sweet", 30.0), ("hugs", 30.0),
                ("game", -40.0), ("dude", -40.0), ("beer", -30.0), ("bro", -20.0),
            ]),
            intercept: 0.0,
        },
        LexiconModel {
            outcome: "depression".into(),
            weights: weights(&[
                ("tired", 30.0), ("alone", 30.0), ("sad", 30.0), ("sorry", 20.0),
                ("great", -30.0), ("happy", -30.0), ("awesome", -20.0), ("excited", -20.0),
            ]),
            intercept: 0.0,
        },
    ];
    let dictionary = "\
# small demo dictionary in LIWC-style format
[leisure]
fun
weekend
party*
game*
beer
[assent]
ok
k
yeah
yes
[auxiliary verbs]
is
are
was
have
can
do
will
[2nd person]
you
u
[positive emotion]
happy
great
awesome
excit*
love
[negative emotion]
sad
alone
sorry
tired
[work]
work*
meeting*
class
exam*
"
    .to_string();

    Fixture {
        users,
        keystrokes,
        facebook,
        lexica,
        dictionary,
    }
}

/// Dense per-user embeddings: a few directions follow the latent traits,
/// the rest is noise. Values can be negative.
pub fn fixture_embeddings(users: &[FixtureUser], dims: usize, seed: u64) -> Vec<(String, Platform, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for u in users {
        let poles = u.poles();
        for platform in Platform::BOTH {
            let v = (0..dims)
                .map(|j| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    let signal = if j < 3 * poles.len() { poles[j % poles.len()] - 0.5 } else { 0.0 };
                    round3(2.0 * signal + 0.3 * e)
                })
                .collect();
            out.push((u.user_id.clone(), platform, v));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sessions_are_deterministic_and_end_cleared() {
        let a = typing_session(3);
        let b = typing_session(3);
        assert_eq!(a.events, b.events);
        assert_eq!(a.events.last().unwrap().current_text, "");
        assert_eq!(
            a.events[a.events.len() - 2].current_text,
            a.final_text
        );
        for (e, m) in a.events.iter().zip(&a.pii_mask) {
            assert_eq!(e.current_text.chars().count(), m.len());
        }
        for p in &a.pii_strings {
            assert!(a.final_text.contains(p.as_str()));
        }
    }

    #[test]
    fn fixture_is_deterministic() {
        let a = fixture(3, 1);
        let b = fixture(3, 1);
        assert_eq!(a.keystrokes, b.keystrokes);
        assert_eq!(a.facebook, b.facebook);
        assert_eq!(a.users, b.users);
        assert!(a.facebook.iter().any(|(_, t)| t.contains("fun weekend")));
    }
}
