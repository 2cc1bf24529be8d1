//! Contact-calling dialog with a goal-directed simulated user.
//!
//! The system must learn the contact name and phone type, get both confirmed
//! and place the call. The user sometimes ignores questions, volunteers or
//! oversupplies slots, uses synonyms that the system mishears, and sometimes
//! wants a phone type the contact does not have.
//!
//! Observation layout (12 values):
//!
//! | index | meaning                                                        |
//! |-------|----------------------------------------------------------------|
//! | 0..7  | one-hot last user act: silence, gave-name, gave-type, gave-both, yes, no, bye |
//! | 7     | a name has been heard                                          |
//! | 8     | a phone type has been heard                                    |
//! | 9     | the heard pair is confirmed                                    |
//! | 10    | the heard contact has no number of the heard type             |
//! | 11    | turn / turn cap                                                |

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{parse_toml, Environment, Transition};
use crate::error::{Error, Result};

pub const OBS_DIM: usize = 12;
pub const NUM_ACTIONS: usize = 5;
pub const DEFAULT_TURN_CAP: usize = 10;
/// Probability that a synonym form is heard as some other value.
pub const SYNONYM_MISHEAR: f64 = 0.5;

const FLAG_NAME: usize = 7;
const FLAG_TYPE: usize = 8;
const FLAG_CONFIRMED: usize = 9;
const FLAG_UNCOVERED: usize = 10;
const TURN: usize = 11;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhoneType {
    Work,
    Mobile,
    Home,
}

impl PhoneType {
    pub const ALL: [PhoneType; 3] = [PhoneType::Work, PhoneType::Mobile, PhoneType::Home];

    pub fn synonym(self) -> &'static str {
        match self {
            PhoneType::Work => "office",
            PhoneType::Mobile => "cell",
            PhoneType::Home => "house",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contact {
    pub name: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
    pub phone_types: Vec<PhoneType>,
}

impl Contact {
    fn new(name: &str, synonyms: &[&str], phone_types: &[PhoneType]) -> Self {
        Contact {
            name: name.to_string(),
            synonyms: synonyms.iter().map(|s| s.to_string()).collect(),
            phone_types: phone_types.to_vec(),
        }
    }

    pub fn has(&self, t: PhoneType) -> bool {
        self.phone_types.contains(&t)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Directory {
    contacts: Vec<Contact>,
}

impl Directory {
    /// Requires at least one contact, at least one phone type per contact and
    /// name forms that identify a single contact.
    pub fn new(contacts: Vec<Contact>) -> Result<Self> {
        if contacts.is_empty() {
            return Err(Error::config("directory needs at least one contact"));
        }
        let mut forms = HashSet::new();
        for c in &contacts {
            if c.phone_types.is_empty() {
                return Err(Error::config(format!("contact `{}` has no phone types", c.name)));
            }
            for form in std::iter::once(&c.name).chain(&c.synonyms) {
                if !forms.insert(form.to_lowercase()) {
                    return Err(Error::config(format!("name form `{form}` is used by more than one contact")));
                }
            }
        }
        Ok(Directory { contacts })
    }

    pub fn contacts(&self) -> &[Contact] {
        &self.contacts
    }

    pub fn len(&self) -> usize {
        self.contacts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.contacts.is_empty()
    }

    /// `(contact, type)` pairs the directory has no number for.
    pub fn uncovered_pairs(&self) -> Vec<(usize, PhoneType)> {
        let mut out = Vec::new();
        for (i, c) in self.contacts.iter().enumerate() {
            for t in PhoneType::ALL {
                if !c.has(t) {
                    out.push((i, t));
                }
            }
        }
        out
    }
}

pub fn default_directory() -> Directory {
    use PhoneType::{Home, Mobile, Work};
    let contacts = vec![
        Contact::new("alice", &["ali"], &[Work, Mobile]),
        Contact::new("bob", &["robert", "rob"], &[Mobile]),
        Contact::new("carol", &[], &[Home, Mobile]),
        Contact::new("dave", &["david"], &[Work]),
        Contact::new("erin", &[], &[Mobile]),
        Contact::new("frank", &["francis"], &[Work, Home, Mobile]),
        Contact::new("grace", &[], &[Home]),
        Contact::new("heidi", &[], &[Work, Mobile]),
        Contact::new("ivan", &["vanya"], &[Mobile]),
        Contact::new("judy", &["judith"], &[Home, Work]),
        Contact::new("mallory", &[], &[Mobile]),
        Contact::new("nick", &["nicholas"], &[Work, Mobile, Home]),
        Contact::new("olivia", &["liv"], &[Mobile]),
        Contact::new("peggy", &["margaret"], &[Home]),
        Contact::new("rupert", &[], &[Work]),
        Contact::new("sybil", &[], &[Mobile, Home]),
        Contact::new("trent", &[], &[Work]),
        Contact::new("victor", &["vic"], &[Mobile, Work]),
        Contact::new("walter", &["walt"], &[Home]),
        Contact::new("yolanda", &[], &[Mobile]),
    ];
    Directory::new(contacts).expect("default directory is valid")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UserModel {
    pub p_answer: f64,
    pub p_oversupply: f64,
    pub p_ignore: f64,
    pub p_giveup_turn: f64,
    pub p_uncovered_goal: f64,
    pub p_yes_correct: f64,
    pub p_no_wrong: f64,
    pub p_restate_on_no: f64,
    pub p_early_info: f64,
    pub p_synonym: f64,
}

impl Default for UserModel {
    fn default() -> Self {
        default_user_model()
    }
}

pub fn default_user_model() -> UserModel {
    UserModel {
        p_answer: 0.8,
        p_oversupply: 0.1,
        p_ignore: 0.15,
        p_giveup_turn: 0.02,
        p_uncovered_goal: 0.1,
        p_yes_correct: 0.95,
        p_no_wrong: 0.9,
        p_restate_on_no: 0.5,
        p_early_info: 0.3,
        p_synonym: 0.3,
    }
}

impl UserModel {
    pub fn parameters(&self) -> [(&'static str, f64); 10] {
        [
            ("p_answer", self.p_answer),
            ("p_oversupply", self.p_oversupply),
            ("p_ignore", self.p_ignore),
            ("p_giveup_turn", self.p_giveup_turn),
            ("p_uncovered_goal", self.p_uncovered_goal),
            ("p_yes_correct", self.p_yes_correct),
            ("p_no_wrong", self.p_no_wrong),
            ("p_restate_on_no", self.p_restate_on_no),
            ("p_early_info", self.p_early_info),
            ("p_synonym", self.p_synonym),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in self.parameters() {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::config(format!("{name} = {p} is not a probability")));
            }
        }
        if self.p_answer + self.p_ignore > 1.0 {
            return Err(Error::config("p_answer + p_ignore exceeds 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DialogConfig {
    pub user: UserModel,
    pub directory: Directory,
    pub turn_cap: usize,
}

impl Default for DialogConfig {
    fn default() -> Self {
        DialogConfig {
            user: default_user_model(),
            directory: default_directory(),
            turn_cap: DEFAULT_TURN_CAP,
        }
    }
}

impl DialogConfig {
    pub fn validate(&self) -> Result<()> {
        self.user.validate()?;
        if self.turn_cap == 0 {
            return Err(Error::config("turn_cap must be at least 1"));
        }
        if self.user.p_uncovered_goal > 0.0 && self.directory.uncovered_pairs().is_empty() {
            return Err(Error::config("p_uncovered_goal > 0 but every contact has every phone type"));
        }
        Ok(())
    }

    /// Reads user-model probabilities and `turn_cap` as top-level keys and an
    /// optional `[[contact]]` array replacing the default directory. Missing
    /// keys keep their defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut table: toml::Table = parse_toml(text)?;
        let mut cfg = DialogConfig::default();
        if let Some(v) = table.remove("turn_cap") {
            let cap = v
                .as_integer()
                .and_then(|c| usize::try_from(c).ok())
                .ok_or_else(|| Error::config("turn_cap must be a non-negative integer"))?;
            cfg.turn_cap = cap;
        }
        if let Some(v) = table.remove("contact") {
            let contacts: Vec<Contact> = v.try_into().map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
            cfg.directory = Directory::new(contacts)?;
        }
        cfg.user = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DialogAction {
    AskName,
    AskPhoneType,
    ConfirmBoth,
    PlaceCall,
    GiveUp,
}

impl DialogAction {
    pub const ALL: [DialogAction; NUM_ACTIONS] = [
        DialogAction::AskName,
        DialogAction::AskPhoneType,
        DialogAction::ConfirmBoth,
        DialogAction::PlaceCall,
        DialogAction::GiveUp,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::Usage(format!("dialog action {i} out of range")))
    }
}

impl fmt::Display for DialogAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

impl FromStr for DialogAction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config(format!("unknown dialog action `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UserAct {
    Silence,
    GaveName,
    GaveType,
    GaveBoth,
    Yes,
    No,
    Bye,
}

impl UserAct {
    fn from_slots(name: bool, phone_type: bool) -> Self {
        match (name, phone_type) {
            (true, true) => UserAct::GaveBoth,
            (true, false) => UserAct::GaveName,
            (false, true) => UserAct::GaveType,
            (false, false) => UserAct::Silence,
        }
    }

    /// Decodes the one-hot block of an observation.
    pub fn from_observation(obs: &[f64]) -> Option<Self> {
        const ACTS: [UserAct; 7] = [
            UserAct::Silence,
            UserAct::GaveName,
            UserAct::GaveType,
            UserAct::GaveBoth,
            UserAct::Yes,
            UserAct::No,
            UserAct::Bye,
        ];
        obs.get(..7)?.iter().position(|&x| x == 1.0).map(|i| ACTS[i])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UserGoal {
    pub contact: usize,
    pub phone_type: PhoneType,
    /// The contact has a number of the desired type.
    pub covered: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Name,
    Type,
}

#[derive(Clone, Debug)]
pub struct DialogEnv {
    config: DialogConfig,
    goal: UserGoal,
    heard_name: Option<usize>,
    heard_type: Option<PhoneType>,
    confirmed: bool,
    last_act: UserAct,
    turn: usize,
    done: bool,
}

impl DialogEnv {
    pub fn new(config: DialogConfig) -> Result<Self> {
        config.validate()?;
        Ok(DialogEnv {
            config,
            goal: UserGoal {
                contact: 0,
                phone_type: PhoneType::Work,
                covered: true,
            },
            heard_name: None,
            heard_type: None,
            confirmed: false,
            last_act: UserAct::Silence,
            turn: 0,
            // stepping before the first reset is a usage error
            done: true,
        })
    }

    pub fn config(&self) -> &DialogConfig {
        &self.config
    }

    pub fn goal(&self) -> UserGoal {
        self.goal
    }

    pub fn turn(&self) -> usize {
        self.turn
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    fn observation(&self) -> Vec<f64> {
        let mut o = vec![0.0; OBS_DIM];
        o[self.last_act as usize] = 1.0;
        let flag = |b: bool| f64::from(u8::from(b));
        o[FLAG_NAME] = flag(self.heard_name.is_some());
        o[FLAG_TYPE] = flag(self.heard_type.is_some());
        o[FLAG_CONFIRMED] = flag(self.confirmed);
        o[FLAG_UNCOVERED] = flag(self.uncovered_signal());
        o[TURN] = self.turn as f64 / self.config.turn_cap as f64;
        o
    }

    fn uncovered_signal(&self) -> bool {
        match (self.heard_name, self.heard_type) {
            (Some(c), Some(t)) => !self.config.directory.contacts()[c].has(t),
            _ => false,
        }
    }

    fn slot_correct(&self, slot: Slot) -> bool {
        match slot {
            Slot::Name => self.heard_name == Some(self.goal.contact),
            Slot::Type => self.heard_type == Some(self.goal.phone_type),
        }
    }

    /// The user utters the goal value of `slot`; a synonym form may be misheard.
    fn utter<R: Rng + ?Sized>(&mut self, slot: Slot, rng: &mut R) {
        let has_synonym = match slot {
            Slot::Name => !self.config.directory.contacts()[self.goal.contact].synonyms.is_empty(),
            Slot::Type => true,
        };
        let misheard = has_synonym && rng.random::<f64>() < self.config.user.p_synonym && rng.random::<f64>() < SYNONYM_MISHEAR;
        match slot {
            Slot::Name => {
                let n = self.config.directory.len();
                let heard = if misheard && n > 1 {
                    // any other contact, uniformly
                    let k = rng.random_range(0..n - 1);
                    if k >= self.goal.contact {
                        k + 1
                    } else {
                        k
                    }
                } else {
                    self.goal.contact
                };
                self.heard_name = Some(heard);
            }
            Slot::Type => {
                let heard = if misheard {
                    let others: Vec<PhoneType> =
                        PhoneType::ALL.into_iter().filter(|&t| t != self.goal.phone_type).collect();
                    *others.choose(rng).expect("three phone types")
                } else {
                    self.goal.phone_type
                };
                self.heard_type = Some(heard);
            }
        }
        self.confirmed = false;
    }

    fn answer<R: Rng + ?Sized>(&mut self, asked: Slot, rng: &mut R) -> UserAct {
        let other = match asked {
            Slot::Name => Slot::Type,
            Slot::Type => Slot::Name,
        };
        let u: f64 = rng.random();
        let user = &self.config.user;
        let (p_answer, p_ignore, p_oversupply) = (user.p_answer, user.p_ignore, user.p_oversupply);
        let given: Vec<Slot> = if u < p_answer {
            if rng.random::<f64>() < p_oversupply {
                vec![asked, other]
            } else {
                vec![asked]
            }
        } else if u < p_answer + p_ignore {
            vec![]
        } else {
            vec![other]
        };
        for &s in &given {
            self.utter(s, rng);
        }
        UserAct::from_slots(given.contains(&Slot::Name), given.contains(&Slot::Type))
    }

    fn confirm<R: Rng + ?Sized>(&mut self, rng: &mut R) -> UserAct {
        let name_ok = self.slot_correct(Slot::Name);
        let type_ok = self.slot_correct(Slot::Type);
        let user = &self.config.user;
        if name_ok && type_ok {
            if rng.random::<f64>() < user.p_yes_correct {
                self.confirmed = true;
                UserAct::Yes
            } else {
                UserAct::Silence
            }
        } else if rng.random::<f64>() < user.p_no_wrong {
            self.confirmed = false;
            if rng.random::<f64>() < self.config.user.p_restate_on_no {
                if !name_ok {
                    self.utter(Slot::Name, rng);
                }
                if !type_ok {
                    self.utter(Slot::Type, rng);
                }
                UserAct::from_slots(!name_ok, !type_ok)
            } else {
                UserAct::No
            }
        } else {
            // a wrong pair slips through
            self.confirmed = true;
            UserAct::Yes
        }
    }

    fn call_succeeds(&self) -> bool {
        self.confirmed && self.goal.covered && self.slot_correct(Slot::Name) && self.slot_correct(Slot::Type)
    }
}

impl Environment for DialogEnv {
    fn observation_dim(&self) -> usize {
        OBS_DIM
    }

    fn num_actions(&self) -> usize {
        NUM_ACTIONS
    }

    fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        let user = &self.config.user;
        let uncovered = self.config.directory.uncovered_pairs();
        self.goal = if !uncovered.is_empty() && rng.random::<f64>() < user.p_uncovered_goal {
            let &(contact, phone_type) = uncovered.choose(rng).expect("nonempty");
            UserGoal {
                contact,
                phone_type,
                covered: false,
            }
        } else {
            let contact = rng.random_range(0..self.config.directory.len());
            let phone_type = *self.config.directory.contacts()[contact]
                .phone_types
                .choose(rng)
                .expect("validated nonempty");
            UserGoal {
                contact,
                phone_type,
                covered: true,
            }
        };
        self.heard_name = None;
        self.heard_type = None;
        self.confirmed = false;
        self.turn = 0;
        self.done = false;
        self.last_act = UserAct::Silence;
        if rng.random::<f64>() < self.config.user.p_early_info {
            self.utter(Slot::Name, rng);
            let both = rng.random::<f64>() < self.config.user.p_oversupply;
            if both {
                self.utter(Slot::Type, rng);
            }
            self.last_act = UserAct::from_slots(true, both);
        }
        self.observation()
    }

    fn step<R: Rng + ?Sized>(&mut self, action: usize, rng: &mut R) -> Result<Transition> {
        if self.done {
            return Err(Error::Usage("dialog is over; call reset".into()));
        }
        let action = DialogAction::from_index(action)?;
        let mut reward = 0.0;
        match action {
            DialogAction::PlaceCall => {
                if self.call_succeeds() {
                    reward = 1.0;
                }
                self.last_act = UserAct::Silence;
                self.done = true;
            }
            DialogAction::GiveUp => {
                self.last_act = UserAct::Silence;
                self.done = true;
            }
            DialogAction::AskName | DialogAction::AskPhoneType | DialogAction::ConfirmBoth => {
                if rng.random::<f64>() < self.config.user.p_giveup_turn {
                    self.last_act = UserAct::Bye;
                    self.done = true;
                } else {
                    self.last_act = match action {
                        DialogAction::AskName => self.answer(Slot::Name, rng),
                        DialogAction::AskPhoneType => self.answer(Slot::Type, rng),
                        _ => self.confirm(rng),
                    };
                }
            }
        }
        self.turn += 1;
        if self.turn >= self.config.turn_cap {
            self.done = true;
        }
        Ok(Transition {
            observation: self.observation(),
            reward,
            done: self.done,
        })
    }
}

/// Hand-written dialog manager: fills missing slots, confirms, calls, and
/// gives up on a confirmed uncovered pair.
///
/// With memory, a denial marks both slots for re-asking until each has been
/// answered again. Without memory the same rules see only the current
/// observation, so a denial re-asks only the name.
#[derive(Clone, Debug, Default)]
pub struct HandCodedPolicy {
    memoryless: bool,
    recheck_name: bool,
    recheck_type: bool,
}

impl HandCodedPolicy {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn memoryless() -> Self {
        HandCodedPolicy {
            memoryless: true,
            ..Self::default()
        }
    }

    pub fn reset(&mut self) {
        self.recheck_name = false;
        self.recheck_type = false;
    }

    pub fn act(&mut self, obs: &[f64]) -> DialogAction {
        if self.memoryless {
            self.reset();
        }
        let act = UserAct::from_observation(obs);
        match act {
            Some(UserAct::No) => {
                self.recheck_name = true;
                self.recheck_type = !self.memoryless;
            }
            Some(UserAct::GaveName) => self.recheck_name = false,
            Some(UserAct::GaveType) => self.recheck_type = false,
            Some(UserAct::GaveBoth) => {
                self.recheck_name = false;
                self.recheck_type = false;
            }
            _ => {}
        }
        let name_heard = obs[FLAG_NAME] == 1.0;
        let type_heard = obs[FLAG_TYPE] == 1.0;
        let confirmed = obs[FLAG_CONFIRMED] == 1.0;
        let uncovered = obs[FLAG_UNCOVERED] == 1.0;
        if !name_heard || self.recheck_name {
            DialogAction::AskName
        } else if !type_heard || self.recheck_type {
            DialogAction::AskPhoneType
        } else if !confirmed {
            DialogAction::ConfirmBoth
        } else if uncovered {
            DialogAction::GiveUp
        } else {
            DialogAction::PlaceCall
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::run_controller;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env_with(user: UserModel) -> DialogEnv {
        DialogEnv::new(DialogConfig {
            user,
            ..DialogConfig::default()
        })
        .unwrap()
    }

    fn compliant() -> UserModel {
        UserModel {
            p_answer: 1.0,
            p_oversupply: 0.0,
            p_ignore: 0.0,
            p_giveup_turn: 0.0,
            p_uncovered_goal: 0.0,
            p_yes_correct: 1.0,
            p_no_wrong: 0.0,
            p_restate_on_no: 0.0,
            p_early_info: 0.0,
            p_synonym: 0.0,
        }
    }

    fn success_rate(policy: &mut HandCodedPolicy, n: usize, seed: u64) -> f64 {
        let mut env = DialogEnv::new(DialogConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut wins = 0.0;
        for _ in 0..n {
            policy.reset();
            let rewards = run_controller(&mut env, &mut rng, |o, _| policy.act(o).index()).unwrap();
            wins += rewards.iter().sum::<f64>();
        }
        wins / n as f64
    }

    #[test]
    fn opening_without_early_info_is_silence() {
        let mut env = env_with(UserModel {
            p_early_info: 0.0,
            ..default_user_model()
        });
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let o = env.reset(&mut rng);
            assert_eq!(o.len(), OBS_DIM);
            let mut expected = vec![0.0; OBS_DIM];
            expected[0] = 1.0;
            assert_eq!(o, expected);
        }
    }

    #[test]
    fn early_info_volunteers_the_name() {
        let mut env = env_with(UserModel {
            p_early_info: 1.0,
            p_oversupply: 0.0,
            ..default_user_model()
        });
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let o = env.reset(&mut rng);
            assert_eq!(UserAct::from_observation(&o), Some(UserAct::GaveName));
            assert_eq!(o[FLAG_NAME], 1.0);
            assert_eq!(o[FLAG_TYPE], 0.0);
        }
    }

    #[test]
    fn immediate_call_fails() {
        let mut env = DialogEnv::new(DialogConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        env.reset(&mut rng);
        let tr = env.step(DialogAction::PlaceCall.index(), &mut rng).unwrap();
        assert_eq!((tr.reward, tr.done), (0.0, true));
        assert!(matches!(env.step(0, &mut rng), Err(Error::Usage(_))));
    }

    #[test]
    fn compliant_user_trace() {
        let mut env = env_with(compliant());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            env.reset(&mut rng);
            let script = [
                DialogAction::AskName,
                DialogAction::AskPhoneType,
                DialogAction::ConfirmBoth,
                DialogAction::PlaceCall,
            ];
            let mut rewards = Vec::new();
            for (i, a) in script.iter().enumerate() {
                let tr = env.step(a.index(), &mut rng).unwrap();
                rewards.push(tr.reward);
                assert_eq!(tr.done, i == 3);
            }
            assert_eq!(rewards, vec![0.0, 0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn turn_cap_ends_with_zero_reward() {
        let mut env = env_with(UserModel {
            p_answer: 0.0,
            p_ignore: 1.0,
            p_giveup_turn: 0.0,
            ..default_user_model()
        });
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        env.reset(&mut rng);
        for t in 1..=DEFAULT_TURN_CAP {
            let tr = env.step(DialogAction::AskName.index(), &mut rng).unwrap();
            assert_eq!(tr.reward, 0.0);
            assert_eq!(tr.done, t == DEFAULT_TURN_CAP);
            assert!((tr.observation[TURN] - t as f64 / 10.0).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_actions_and_unreset_env() {
        let mut env = DialogEnv::new(DialogConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert!(matches!(env.step(0, &mut rng), Err(Error::Usage(_))));
        env.reset(&mut rng);
        assert!(matches!(env.step(NUM_ACTIONS, &mut rng), Err(Error::Usage(_))));
    }

    #[test]
    fn defaults_are_valid() {
        let m = default_user_model();
        assert_eq!(m.parameters().len(), 10);
        assert!(m.parameters().iter().all(|(_, p)| (0.0..=1.0).contains(p)));
        let d = default_directory();
        assert_eq!(d.len(), 20);
        assert!(d.contacts().iter().any(|c| c.phone_types.len() >= 2));
        assert!(d.contacts().iter().any(|c| !c.synonyms.is_empty()));
        assert!(!d.uncovered_pairs().is_empty());
        assert!(DialogConfig::default().validate().is_ok());
    }

    #[test]
    fn directory_invariants() {
        let c = |n: &str, s: &[&str], t: &[PhoneType]| Contact::new(n, s, t);
        assert!(Directory::new(vec![]).is_err());
        assert!(Directory::new(vec![c("a", &[], &[])]).is_err());
        assert!(Directory::new(vec![c("a", &["x"], &[PhoneType::Work]), c("b", &["X"], &[PhoneType::Home])]).is_err());
        assert!(Directory::new(vec![c("a", &["x"], &[PhoneType::Work]), c("b", &["y"], &[PhoneType::Home])]).is_ok());
    }

    #[test]
    fn user_model_validation() {
        let bad = UserModel {
            p_answer: 0.9,
            p_ignore: 0.2,
            ..default_user_model()
        };
        assert!(bad.validate().is_err());
        let bad = UserModel {
            p_synonym: 1.5,
            ..default_user_model()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn config_from_toml() {
        let cfg = DialogConfig::from_toml("p_answer = 0.7\nturn_cap = 8\n").unwrap();
        assert_eq!(cfg.user.p_answer, 0.7);
        assert_eq!(cfg.user.p_ignore, 0.15);
        assert_eq!(cfg.turn_cap, 8);
        assert_eq!(cfg.directory, default_directory());

        let text = r#"
p_uncovered_goal = 0.0
[[contact]]
name = "zed"
synonyms = ["z"]
phone_types = ["mobile", "home"]
"#;
        let cfg = DialogConfig::from_toml(text).unwrap();
        assert_eq!(cfg.directory.len(), 1);
        assert_eq!(cfg.directory.contacts()[0].phone_types, vec![PhoneType::Mobile, PhoneType::Home]);

        assert!(matches!(DialogConfig::from_toml("p_answr = 0.5"), Err(Error::Config(_))));
        assert!(matches!(DialogConfig::from_toml("p_answer = 2.0"), Err(Error::Config(_))));
    }

    #[test]
    fn seeded_traces_are_identical() {
        let trace = |seed: u64| {
            let mut env = DialogEnv::new(DialogConfig::default()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut out = Vec::new();
            for _ in 0..20 {
                out.push(env.reset(&mut rng));
                loop {
                    let a = rng.random_range(0..NUM_ACTIONS);
                    let tr = env.step(a, &mut rng).unwrap();
                    out.push(tr.observation);
                    if tr.done {
                        break;
                    }
                }
            }
            out
        };
        assert_eq!(trace(9), trace(9));
        assert_ne!(trace(9), trace(10));
    }

    #[test]
    fn random_policy_lengths_and_rewards() {
        let mut env = DialogEnv::new(DialogConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..10_000 {
            env.reset(&mut rng);
            let mut t = 0;
            loop {
                let a = DialogAction::ALL[rng.random_range(0..NUM_ACTIONS)];
                let tr = env.step(a.index(), &mut rng).unwrap();
                t += 1;
                assert!(tr.reward == 0.0 || tr.reward == 1.0);
                if tr.reward == 1.0 {
                    assert!(tr.done && a == DialogAction::PlaceCall);
                }
                if tr.done {
                    break;
                }
            }
            assert!((1..=DEFAULT_TURN_CAP).contains(&t));
        }
    }

    #[test]
    fn hand_coded_policy_success_rate() {
        let rate = success_rate(&mut HandCodedPolicy::new(), 20_000, 7);
        assert!((0.75..=0.92).contains(&rate), "success rate {rate}");
    }

    #[test]
    fn memory_beats_memoryless_rules() {
        let n = 100_000;
        let with_memory = success_rate(&mut HandCodedPolicy::new(), n, 8);
        let without = success_rate(&mut HandCodedPolicy::memoryless(), n, 9);
        let se = ((with_memory * (1.0 - with_memory) + without * (1.0 - without)) / n as f64).sqrt();
        assert!(with_memory - without > 3.0 * se, "{with_memory} vs {without}, se {se}");
    }
}
