//! Seeded synthetic play-by-post corpus with oracle labels and a rule-based
//! player.
//!
//! Each episode is one thread: a DM intro carrying a scene cue, player chat,
//! a DM post addressed to the player that hides one guidance sentence among
//! filler narration, an optional DM reply to another player, and the
//! player's ability check.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::action::ActionLabel;
use crate::corpus::{
    assign_split, episode_id_for, split_sentences, ContextTurn, Episode, Post, Provenance, Role,
};
use crate::error::{Error, Result};
use crate::textfeat::tokenize;

/// One guidance sentence pattern keyed to the action it elicits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidanceTemplate {
    pub id: String,
    pub action: ActionLabel,
    /// Sentence with optional `{entity}` / `{place}` slots.
    pub pattern: String,
    /// Lowercase tokens the rule player reacts to.
    pub cue_tokens: Vec<String>,
}

impl GuidanceTemplate {
    pub fn new(id: &str, action: &str, pattern: &str, cues: &[&str]) -> Self {
        GuidanceTemplate {
            id: id.to_owned(),
            action: ActionLabel::new(action),
            pattern: pattern.to_owned(),
            cue_tokens: cues.iter().map(|c| c.to_lowercase()).collect(),
        }
    }

    pub fn instantiate(&self, entity: &str, place: &str) -> String {
        fill_slots(&self.pattern, entity, place)
    }
}

pub fn fill_slots(pattern: &str, entity: &str, place: &str) -> String {
    pattern.replace("{entity}", entity).replace("{place}", place)
}

const DEFAULT_TEMPLATES: [(&str, &str, &str, [&str; 2]); 46] = [
    ("acrobatics-1", "acrobatics", "The rope bridge sways wildly beneath your feet.", ["sways", "bridge"]),
    ("acrobatics-2", "acrobatics", "A narrow ledge tilts toward the drop below {place}.", ["ledge", "tilts"]),
    ("animal-handling-1", "animal handling", "The cart horse rears and stamps at the smell of smoke.", ["horse", "rears"]),
    ("animal-handling-2", "animal handling", "A half-starved wolfhound growls from beneath the wagon.", ["wolfhound", "growls"]),
    ("arcana-1", "arcana", "Strange runes on the door are faintly glowing.", ["runes", "glowing"]),
    ("arcana-2", "arcana", "The amulet around {entity}'s neck gives off a low hum.", ["amulet", "hum"]),
    ("athletics-1", "athletics", "The cliff face above offers only a few handholds.", ["cliff", "handholds"]),
    ("athletics-2", "athletics", "A massive boulder blocks the mouth of the tunnel.", ["boulder", "massive"]),
    ("deception-1", "deception", "The sentry squints at your forged papers with open suspicion.", ["forged", "squints"]),
    ("deception-2", "deception", "Your stolen disguise may fool {entity} if you keep up the lie.", ["disguise", "lie"]),
    ("history-1", "history", "The banner bears a faded crest you half remember.", ["crest", "banner"]),
    ("history-2", "history", "An inscription on the arch near {place} dates back centuries.", ["inscription", "centuries"]),
    ("insight-1", "insight", "{entity} avoids your gaze, fidgeting with a ring.", ["gaze", "fidgeting"]),
    ("insight-2", "insight", "The merchant's smile never quite reaches the eyes.", ["smile", "merchant"]),
    ("intimidation-1", "intimidation", "The bandit sneers, but the hand on the dagger trembles.", ["sneers", "trembles"]),
    ("intimidation-2", "intimidation", "Cornered, the young thug glances toward the door.", ["cornered", "thug"]),
    ("investigation-1", "investigation", "A battered lockbox lies half buried in the wreckage.", ["lockbox", "wreckage"]),
    ("investigation-2", "investigation", "Scratches around the hearth hint at a hidden panel.", ["hearth", "panel"]),
    ("medicine-1", "medicine", "{entity} looks pale and gasps for breath.", ["pale", "gasps"]),
    ("medicine-2", "medicine", "The wound on the scout's leg is red and swollen.", ["wound", "swollen"]),
    ("nature-1", "nature", "The berries growing by the roadside have an odd purple sheen.", ["berries", "sheen"]),
    ("nature-2", "nature", "The birds in the canopy have fallen completely still.", ["birds", "canopy"]),
    ("perception-1", "perception", "You notice some movements in the bushes.", ["movements", "bushes"]),
    ("perception-2", "perception", "A faint glint flickers from the treeline near {place}.", ["glint", "treeline"]),
    ("performance-1", "performance", "A restless crowd gathers near the stage in the square.", ["crowd", "stage"]),
    ("performance-2", "performance", "{entity} hands you a battered lute and asks for a song.", ["lute", "song"]),
    ("persuasion-1", "persuasion", "The guard seems a bit shaken to hear your words.", ["shaken", "guard"]),
    ("persuasion-2", "persuasion", "{entity} hesitates, clearly torn about whether to lend you aid.", ["hesitates", "torn"]),
    ("religion-1", "religion", "A small shrine to a forgotten god stands beside the path.", ["shrine", "god"]),
    ("religion-2", "religion", "The priest's prayer beads are carved with holy symbols.", ["prayer", "holy"]),
    ("sleight-of-hand-1", "sleight of hand", "A fat coin purse dangles from the noble's belt.", ["purse", "dangles"]),
    ("sleight-of-hand-2", "sleight of hand", "The jailer's key ring hangs loosely from a hook.", ["key", "jailer"]),
    ("stealth-1", "stealth", "The bandits are dozing around their camp.", ["dozing", "camp"]),
    ("stealth-2", "stealth", "Deep shadows along the wall offer plenty of cover.", ["shadows", "cover"]),
    ("survival-1", "survival", "Fresh tracks lead off the road into the forest.", ["tracks", "forest"]),
    ("survival-2", "survival", "Hoofprints toward {place} vanish beneath the snowdrifts.", ["hoofprints", "snowdrifts"]),
    ("strength-1", "strength", "The rusted portcullis is stuck halfway open.", ["portcullis", "rusted"]),
    ("strength-2", "strength", "A fallen beam pins {entity} to the floor.", ["pins", "beam"]),
    ("dexterity-1", "dexterity", "Something in the wall whirs as a trap springs to life.", ["trap", "whirs"]),
    ("dexterity-2", "dexterity", "The tiles ahead crumble away one by one.", ["tiles", "crumble"]),
    ("constitution-1", "constitution", "A noxious gas seeps up through the floorboards.", ["noxious", "gas"]),
    ("constitution-2", "constitution", "The blistering march through the desert has no end in sight.", ["blistering", "march"]),
    ("intelligence-1", "intelligence", "An old puzzle of brass dials covers the vault door.", ["puzzle", "dials"]),
    ("intelligence-2", "intelligence", "The riddle carved into the stone tablet is written in verse.", ["riddle", "tablet"]),
    ("wisdom-1", "wisdom", "A sense of dread settles over you as faint whispers rise.", ["dread", "whispers"]),
    ("wisdom-2", "wisdom", "The old hermit warns you to trust your instincts here.", ["hermit", "instincts"]),
];

/// Two templates for each of the 23 default actions, in action order.
pub fn default_bank() -> Vec<GuidanceTemplate> {
    DEFAULT_TEMPLATES
        .iter()
        .map(|(id, action, pattern, cues)| GuidanceTemplate::new(id, action, pattern, cues))
        .collect()
}

/// Distinct actions of a bank in order of first appearance.
pub fn bank_actions(bank: &[GuidanceTemplate]) -> Vec<ActionLabel> {
    let mut out: Vec<ActionLabel> = Vec::new();
    for t in bank {
        if !out.contains(&t.action) {
            out.push(t.action.clone());
        }
    }
    out
}

/// Checks bank invariants and returns its actions.
pub fn validate_bank(bank: &[GuidanceTemplate]) -> Result<Vec<ActionLabel>> {
    let mut ids = std::collections::HashSet::new();
    for t in bank {
        if !ids.insert(t.id.as_str()) {
            return Err(Error::Config(format!("duplicate template id `{}`", t.id)));
        }
        if t.cue_tokens.is_empty() || t.cue_tokens.iter().any(|c| c.is_empty()) {
            return Err(Error::Config(format!("template `{}` has no cue tokens", t.id)));
        }
        let sample = t.instantiate("Gundren Rockseeker", "Phandalin");
        if split_sentences(&sample).len() != 1 {
            return Err(Error::Config(format!("template `{}` is not one sentence", t.id)));
        }
    }
    let actions = bank_actions(bank);
    if actions.len() < 2 {
        return Err(Error::Config(format!(
            "template bank covers {} action(s), need at least 2",
            actions.len()
        )));
    }
    Ok(actions)
}

pub const DEFAULT_ENTITIES: [&str; 10] = [
    "Gundren Rockseeker",
    "Sildar Hallwinter",
    "Toblen Stonehill",
    "Linene Graywind",
    "Halia Thornton",
    "Daran Edermath",
    "Qelline Alderleaf",
    "Harbin Wester",
    "Elmar Barthen",
    "Sister Garaele",
];

pub const DEFAULT_PLACES: [&str; 8] = [
    "Phandalin",
    "Neverwinter",
    "Thundertree",
    "Conyberry",
    "Leilon",
    "Cragmaw Castle",
    "Wave Echo Cave",
    "Triboar",
];

pub const DEFAULT_PLAYERS: [&str; 10] = [
    "Clint", "Vi", "Mara", "Dorn", "Ilse", "Tavi", "Bram", "Nyx", "Orrin", "Pell",
];

pub const DM_AUTHOR: &str = "DM";

/// In-fiction narration that never carries a cue token.
pub const FILLERS: [&str; 30] = [
    "The wagon creaks along the dirt trail toward {place}.",
    "{entity} grumbles about the price of grain in {place}.",
    "A cold wind sweeps down from the hills.",
    "The sky has turned a dull shade of grey.",
    "Your boots are caked with mud from the long walk.",
    "{entity} mentions an old friend who lives near {place}.",
    "Somewhere in the distance a dog barks twice.",
    "The afternoon sun beats down on the party.",
    "You pass a farmer leading a pair of oxen.",
    "The smell of rain hangs in the air.",
    "{entity} whistles an old tune as the hours pass.",
    "Smoke from a distant chimney curls into the sky.",
    "The journey so far has been quiet and uneventful.",
    "A signpost points the way to {place}.",
    "Clouds gather slowly over the western hills.",
    "Your packs feel heavier with every mile.",
    "{entity} asks whether anyone has been to {place} before.",
    "The trail narrows as it winds between low hills.",
    "Crows circle lazily overhead.",
    "A light drizzle begins to fall.",
    "The supplies in the wagon rattle with every bump.",
    "{entity} complains that the trip is taking too long.",
    "Evening is still a few hours away.",
    "The countryside around {place} is green and quiet.",
    "A stream gurgles somewhere off to the left.",
    "{entity} tells a long tale about a lost cousin.",
    "You stop briefly to water the oxen.",
    "The air grows cooler as the day wears on.",
    "Old stone walls line the fields on either side.",
    "{entity} tightens the straps on the wagon harness.",
];

/// Out-of-character table talk.
pub const CHITCHAT: [&str; 12] = [
    "Sorry for the slow post, busy week at work.",
    "Let me know if anyone needs a recap.",
    "I will be away this weekend, feel free to move my character along.",
    "Great posts so far, everyone.",
    "Quick reminder to update your character sheets.",
    "Is everyone okay with a faster posting pace?",
    "I updated the map in the first post.",
    "Happy holidays to all of you.",
    "Thanks for your patience while I sorted things out.",
    "Let us keep the game moving.",
    "Apologies for the typos in my last post.",
    "Feel free to ask questions in the discussion thread.",
];

const INTROS: [&str; 5] = [
    "{entity} has hired you to escort a wagon of supplies to {place}.",
    "You arrive at the edge of {place} with {entity} at your side.",
    "Your employer {entity} leads the party along the trail toward {place}.",
    "The party has spent three days on the road to {place} with {entity}.",
    "A letter from {entity} asks you to meet in {place} without delay.",
];

const PLAYER_CHAT: [&str; 10] = [
    "I keep my hand near my sword as we walk.",
    "We should reach town before nightfall.",
    "Anyone else hungry?",
    "I ride near the front of the wagon and keep quiet.",
    "How far is it still?",
    "I share some dried meat with the others.",
    "Let's stay together, this place makes me nervous.",
    "I wonder what we will find when we get there.",
    "I adjust my cloak against the wind.",
    "Stay sharp, everyone.",
];

const DM_REPLIES: [&str; 5] = [
    "{other}, you find nothing unusual in the wagon.",
    "{other}, the innkeeper nods and pours you another drink.",
    "{other}, that sounds like a fine plan for now.",
    "{other}, the others wait while you finish.",
    "{other}, your map shows the next village is close.",
];

const QUOTES: [&str; 8] = [
    "\u{201c}Let me take a closer look.\u{201d}",
    "\u{201c}Leave this to me.\u{201d}",
    "\u{201c}Hold on, everyone.\u{201d}",
    "\u{201c}I have a feeling about this.\u{201d}",
    "\u{201c}Give me a moment.\u{201d}",
    "\u{201c}Alright, here goes.\u{201d}",
    "\u{201c}Stand back.\u{201d}",
    "\u{201c}Trust me on this one.\u{201d}",
];

const SCENE_CUES: [(&str, [&str; 2]); 23] = [
    ("acrobatics", ["The only way across the gorge is a rickety crossing of planks.", "The path ahead runs along a crumbling mountain rim."]),
    ("animal handling", ["The pack animals have been skittish all day.", "A stray hound has been following the party since dawn."]),
    ("arcana", ["Rumors speak of a wizard's tower nearby.", "Traces of old magic linger in this valley."]),
    ("athletics", ["The road ends at a steep rocky slope.", "A fast river blocks the way forward."]),
    ("deception", ["Only travelers bearing the baron's seal may enter the town.", "The gatekeepers have orders to turn away adventurers."]),
    ("history", ["This valley was once the site of a great battle.", "The ruins here belonged to an ancient dwarven kingdom."]),
    ("insight", ["Not everyone in town is who they claim to be.", "Someone in the caravan has been lying about their past."]),
    ("intimidation", ["A gang of toughs has been extorting the locals.", "The bandits here only respect a show of force."]),
    ("investigation", ["A caravan was ambushed on this stretch last week.", "Someone broke into the town hall and stole the ledger."]),
    ("medicine", ["A sickness has been spreading among the villagers.", "One of the scouts returned from patrol badly hurt."]),
    ("nature", ["The local herbs are said to have strange properties.", "The wildlife in this region has been acting oddly."]),
    ("perception", ["Travelers have vanished along this road.", "Goblin raiders are said to lurk in these hills."]),
    ("performance", ["The town is preparing for its harvest festival.", "The tavern owner is looking for entertainers."]),
    ("persuasion", ["The townsfolk are wary of strangers.", "The mayor refuses to help outsiders without good reason."]),
    ("religion", ["The old temple on the hill has been abandoned for years.", "Pilgrims often travel this way to a sacred site."]),
    ("sleight of hand", ["A wealthy noble is visiting the market today.", "The prisoners' belongings are locked in the warden's office."]),
    ("stealth", ["A band of raiders is said to sleep near the old mill.", "The enemy outpost has lookouts posted day and night."]),
    ("survival", ["The party has lost the trail in the wilderness.", "Winter has come early to the northern roads."]),
    ("strength", ["The old fort's gate has not been opened in decades.", "A rockslide has blocked part of the mountain pass."]),
    ("dexterity", ["The vault is said to be riddled with traps.", "The old crypt is full of hidden mechanisms."]),
    ("constitution", ["The swamp air here is thick and foul.", "The desert crossing will take several days."]),
    ("intelligence", ["The wizard's vault is sealed by a clever lock.", "An ancient machine sits idle in the ruins."]),
    ("wisdom", ["Many who enter these woods never return.", "The locals say the ruins are haunted."]),
];

const INTENT_PARAPHRASES: [(&str, [&str; 3]); 23] = [
    ("acrobatics", ["get the party to keep their balance", "have someone leap nimbly across the gap", "make the players tumble past the danger"]),
    ("animal handling", ["have the party calm the frightened animal", "get the players to soothe the beast", "make someone steady the nervous mount"]),
    ("arcana", ["get the party to understand the magic at work", "have the players identify the enchantment", "make someone recall what they know of spells"]),
    ("athletics", ["have the party climb past the obstacle", "get the players to force their way up the slope", "make someone swim or jump across"]),
    ("deception", ["get the players to bluff their way through", "have the party fool the sentries", "make someone tell a convincing falsehood"]),
    ("history", ["have the party recall the old legends", "get the players to remember the fallen kingdom", "make someone place the heraldry"]),
    ("insight", ["have the party read the true motives of the stranger", "get the players to see through the act", "make someone judge whether they are being lied to"]),
    ("intimidation", ["have the party frighten the bandits into talking", "get the players to threaten the thug", "make someone cow the toughs"]),
    ("investigation", ["get the party to search the scene for clues", "have the players examine the wreck closely", "make someone deduce what happened here"]),
    ("medicine", ["have the party tend to the wounded", "get the players to treat the sick", "make someone stabilize the injured scout"]),
    ("nature", ["get the players to identify the strange plants", "have the party read the signs of the wild", "make someone recall the local wildlife"]),
    ("perception", ["get the players to spot the hidden goblins", "have the party notice the ambush before it starts", "make sure someone sees what is lurking nearby"]),
    ("performance", ["have a player entertain the crowd", "get the party to put on a show", "make someone play music for the festival"]),
    ("persuasion", ["make the guard more willing to talk", "win the wary locals over with kind words", "get the party to convince someone to help"]),
    ("religion", ["get someone to recognize the sacred symbols", "have the party recall the rites of the old faith", "make the players identify the forgotten deity"]),
    ("sleight of hand", ["have a player lift the item without being seen", "get someone to pick the pocket quietly", "make the players palm the keys unnoticed"]),
    ("stealth", ["get the party to sneak past unseen", "have the players slip by the lookouts", "make someone move silently around the raiders"]),
    ("survival", ["get the party to follow the trail", "have the players find their way through the wilds", "make someone track the raiders"]),
    ("strength", ["have the party force the way open", "get the players to lift the fallen debris", "make someone break through the gate"]),
    ("dexterity", ["have the party dodge the danger quickly", "get the players to react before the mechanism fires", "make someone keep their footing on the shifting floor"]),
    ("constitution", ["test how well the party endures hardship", "have the players resist the foul air", "make someone push on through exhaustion"]),
    ("intelligence", ["get the party to solve the puzzle", "have the players work out the mechanism", "make someone reason through the clever lock"]),
    ("wisdom", ["get the players to trust their gut feeling", "have the party sense that something is wrong", "make someone stay alert to the unseen threat"]),
];

fn scene_cues_for(action: &ActionLabel) -> Vec<String> {
    SCENE_CUES
        .iter()
        .find(|(a, _)| *a == action.as_str())
        .map(|(_, c)| c.iter().map(|s| (*s).to_owned()).collect())
        .unwrap_or_else(|| vec![format!("Everyone senses that {action} will matter here.")])
}

/// Free-form statements of a DM intent leading to `action`.
pub fn intent_paraphrases(action: &ActionLabel) -> Vec<String> {
    INTENT_PARAPHRASES
        .iter()
        .find(|(a, _)| *a == action.as_str())
        .map(|(_, c)| c.iter().map(|s| (*s).to_owned()).collect())
        .unwrap_or_else(|| vec![format!("have the players attempt {action}")])
}

/// Text stock that must stay free of cue tokens: fillers, chitchat, intros,
/// chat, DM replies, quotes and scene cues.
pub fn non_guidance_stock() -> Vec<&'static str> {
    let mut out: Vec<&'static str> = Vec::new();
    out.extend(FILLERS);
    out.extend(CHITCHAT);
    out.extend(INTROS);
    out.extend(PLAYER_CHAT);
    out.extend(DM_REPLIES);
    out.extend(QUOTES);
    for (_, cues) in &SCENE_CUES {
        out.extend(cues.iter().copied());
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthMode {
    Plain,
    Ambiguous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_episodes: usize,
    pub seed: u64,
    /// Probability that the rule player ignores the DM and acts at random.
    pub eta: f64,
    /// Inclusive range of filler sentences per DM guidance post.
    pub filler_min: usize,
    pub filler_max: usize,
    pub mode: SynthMode,
    pub entity_pool: Vec<String>,
    pub place_pool: Vec<String>,
    pub player_pool: Vec<String>,
    /// Probability that the intro's scene cue matches the intended action.
    pub scene_reliability: f64,
    /// Probability that a second player takes part in the thread.
    pub other_player_prob: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_episodes: 5000,
            seed: 0,
            eta: 0.1,
            filler_min: 4,
            filler_max: 12,
            mode: SynthMode::Plain,
            entity_pool: DEFAULT_ENTITIES.iter().map(|s| (*s).to_owned()).collect(),
            place_pool: DEFAULT_PLACES.iter().map(|s| (*s).to_owned()).collect(),
            player_pool: DEFAULT_PLAYERS.iter().map(|s| (*s).to_owned()).collect(),
            scene_reliability: 0.85,
            other_player_prob: 0.5,
        }
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("{name} must be in [0, 1], got {p}")));
    }
    Ok(())
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_episodes == 0 {
            return Err(Error::Config("n_episodes must be >= 1".into()));
        }
        check_probability("eta", self.eta)?;
        check_probability("scene_reliability", self.scene_reliability)?;
        check_probability("other_player_prob", self.other_player_prob)?;
        if self.filler_min > self.filler_max || self.filler_max > FILLERS.len() {
            return Err(Error::Config(format!(
                "filler range {}..={} must be ordered and at most {}",
                self.filler_min,
                self.filler_max,
                FILLERS.len()
            )));
        }
        if self.entity_pool.is_empty() || self.place_pool.is_empty() {
            return Err(Error::Config("entity and place pools must be non-empty".into()));
        }
        if self.player_pool.len() < 2 {
            return Err(Error::Config("player pool needs at least two names".into()));
        }
        Ok(())
    }
}

/// Oracle record for one synthetic episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldLabel {
    pub id: String,
    pub guidance_index: usize,
    pub template_id: String,
    pub guidance_sentence: String,
    pub intent_text: String,
    pub intended_action: ActionLabel,
    pub player_action: ActionLabel,
    /// The player ignored the DM and acted at random.
    pub noisy: bool,
    /// Second guidance sentence in ambiguous mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distractor_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub posts: Vec<Post>,
    pub episodes: Vec<Episode>,
    pub labels: Vec<GoldLabel>,
}

/// Maps cue tokens to actions for the rule player.
#[derive(Debug, Clone)]
pub struct CueMatcher {
    actions: Vec<ActionLabel>,
    cues: std::collections::HashMap<String, usize>,
}

impl CueMatcher {
    pub fn new(bank: &[GuidanceTemplate]) -> Self {
        let actions = bank_actions(bank);
        let mut cues = std::collections::HashMap::new();
        for t in bank {
            let a = actions.iter().position(|x| *x == t.action).expect("bank action");
            for c in &t.cue_tokens {
                cues.entry(c.clone()).or_insert(a);
            }
        }
        CueMatcher { actions, cues }
    }

    pub fn actions(&self) -> &[ActionLabel] {
        &self.actions
    }

    /// Action whose cue token occurs earliest in `text`.
    pub fn earliest(&self, text: &str) -> Option<&ActionLabel> {
        tokenize(text)
            .iter()
            .find_map(|t| self.cues.get(t))
            .map(|&a| &self.actions[a])
    }

    /// Rule player: with probability `eta`, or when no cue matches, a
    /// uniformly random action; otherwise the earliest cued action.
    pub fn act<R: Rng + ?Sized>(&self, dm_text: &str, eta: f64, rng: &mut R) -> ActionLabel {
        let noise = rng.gen::<f64>() < eta;
        let cued = if noise { None } else { self.earliest(dm_text) };
        match cued {
            Some(a) => a.clone(),
            None => self.actions[rng.gen_range(0..self.actions.len())].clone(),
        }
    }
}

pub fn rule_player_act<R: Rng + ?Sized>(
    dm_text: &str,
    bank: &[GuidanceTemplate],
    eta: f64,
    rng: &mut R,
) -> ActionLabel {
    CueMatcher::new(bank).act(dm_text, eta, rng)
}

fn pick<'a, R: Rng + ?Sized, T>(rng: &mut R, items: &'a [T]) -> &'a T {
    &items[rng.gen_range(0..items.len())]
}

fn action_post_text<R: Rng + ?Sized>(rng: &mut R, player: &str, action: &ActionLabel) -> String {
    let quote = *pick(rng, &QUOTES);
    let roll: Option<u8> = if rng.gen::<f64>() < 0.9 {
        Some(rng.gen_range(1..=20))
    } else {
        None
    };
    let body = match (rng.gen_range(0..4), roll) {
        (0, Some(r)) => format!("{player} makes a {action} check. {r}"),
        (1, Some(r)) => format!("Rolling for {action}: {r}"),
        (2, Some(r)) => format!("{action} check: {r}"),
        (_, Some(r)) => format!("{player} rolls {action} and gets a {r}."),
        (_, None) => format!("{player} makes a {action} check."),
    };
    format!("{quote} {body}")
}

/// Generates `cfg.n_episodes` single-episode threads.
pub fn generate_corpus(cfg: &SynthConfig, bank: &[GuidanceTemplate]) -> Result<SynthCorpus> {
    cfg.validate()?;
    let actions = validate_bank(bank)?;
    let matcher = CueMatcher::new(bank);
    let by_action: Vec<Vec<&GuidanceTemplate>> = actions
        .iter()
        .map(|a| bank.iter().filter(|t| t.action == *a).collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut posts = Vec::new();
    let mut episodes = Vec::with_capacity(cfg.n_episodes);
    let mut labels = Vec::with_capacity(cfg.n_episodes);

    for n in 0..cfg.n_episodes {
        let thread = format!("t{n:05}");
        let pid = |k: usize| format!("{thread}-{k}");
        let entity = pick(&mut rng, &cfg.entity_pool).clone();
        let place = pick(&mut rng, &cfg.place_pool).clone();
        let fill = |s: &str| fill_slots(s, &entity, &place);

        let pi = rng.gen_range(0..cfg.player_pool.len());
        let player = cfg.player_pool[pi].clone();
        let other = if rng.gen::<f64>() < cfg.other_player_prob {
            let mut oi = rng.gen_range(0..cfg.player_pool.len() - 1);
            if oi >= pi {
                oi += 1;
            }
            Some(cfg.player_pool[oi].clone())
        } else {
            None
        };

        let intended_idx = rng.gen_range(0..actions.len());
        let intended = actions[intended_idx].clone();
        let scene_action = if rng.gen::<f64>() < cfg.scene_reliability {
            intended.clone()
        } else {
            actions[rng.gen_range(0..actions.len())].clone()
        };
        let scene = pick(&mut rng, &scene_cues_for(&scene_action)).clone();
        let intro_line = fill(pick(&mut rng, &INTROS));
        let intro = if rng.gen::<bool>() {
            format!("{intro_line} {scene}")
        } else {
            format!("{scene} {intro_line}")
        };

        // Guidance post: fillers with the guidance sentence (and in ambiguous
        // mode a second, later one for another action).
        let n_fill = rng.gen_range(cfg.filler_min..=cfg.filler_max);
        let mut sentences: Vec<String> = FILLERS
            .choose_multiple(&mut rng, n_fill)
            .map(|s| fill(s))
            .collect();
        let template = *pick(&mut rng, &by_action[intended_idx]);
        let guidance = template.instantiate(&entity, &place);
        let intended_pos = rng.gen_range(0..=sentences.len());
        sentences.insert(intended_pos, guidance);
        let mut second: Option<(usize, ActionLabel, &GuidanceTemplate)> = None;
        if cfg.mode == SynthMode::Ambiguous {
            let mut oa = rng.gen_range(0..actions.len() - 1);
            if oa >= intended_idx {
                oa += 1;
            }
            let t2 = *pick(&mut rng, &by_action[oa]);
            let at = rng.gen_range(intended_pos + 1..=sentences.len());
            sentences.insert(at, t2.instantiate(&entity, &place));
            second = Some((at, actions[oa].clone(), t2));
        }
        let dm_text = sentences.join(" ");
        let player_action = matcher.act(&dm_text, cfg.eta, &mut rng);
        let noisy = player_action != intended;
        // The gold sentence is the one the player acted on.
        let (g_idx, gold_template, distractor_index) = match &second {
            Some((at, a2, t2)) if *a2 == player_action => (*at, *t2, Some(intended_pos)),
            Some((at, _, _)) => (intended_pos, template, Some(*at)),
            None => (intended_pos, template, None),
        };
        let intent_text = pick(&mut rng, &intent_paraphrases(&intended)).clone();

        let mut thread_posts = vec![
            Post {
                id: pid(0),
                author: DM_AUTHOR.into(),
                role: Role::Dm,
                text: intro,
                reply_to: None,
                name_mentions: vec![],
                seq: 0,
            },
            Post {
                id: pid(1),
                author: player.clone(),
                role: Role::Player,
                text: (*pick(&mut rng, &PLAYER_CHAT)).to_owned(),
                reply_to: None,
                name_mentions: vec![],
                seq: 1,
            },
        ];
        let mut other_chat_id = None;
        if let Some(o) = &other {
            let id = pid(thread_posts.len());
            thread_posts.push(Post {
                id: id.clone(),
                author: o.clone(),
                role: Role::Player,
                text: (*pick(&mut rng, &PLAYER_CHAT)).to_owned(),
                reply_to: None,
                name_mentions: vec![],
                seq: thread_posts.len() as u64,
            });
            other_chat_id = Some(id);
        }
        let context: Vec<ContextTurn> = thread_posts
            .iter()
            .map(|p| ContextTurn {
                speaker: p.author.clone(),
                role: p.role,
                text: p.text.clone(),
            })
            .collect();
        let guidance_post_id = pid(thread_posts.len());
        thread_posts.push(Post {
            id: guidance_post_id.clone(),
            author: DM_AUTHOR.into(),
            role: Role::Dm,
            text: dm_text.clone(),
            reply_to: Some(pid(1)),
            name_mentions: vec![player.clone()],
            seq: thread_posts.len() as u64,
        });
        if let (Some(o), Some(oid)) = (&other, &other_chat_id) {
            if rng.gen::<bool>() {
                thread_posts.push(Post {
                    id: pid(thread_posts.len()),
                    author: DM_AUTHOR.into(),
                    role: Role::Dm,
                    text: pick(&mut rng, &DM_REPLIES).replace("{other}", o),
                    reply_to: Some(oid.clone()),
                    name_mentions: vec![o.clone()],
                    seq: thread_posts.len() as u64,
                });
            }
        }
        let action_id = pid(thread_posts.len());
        let player_text = action_post_text(&mut rng, &player, &player_action);
        thread_posts.push(Post {
            id: action_id.clone(),
            author: player.clone(),
            role: Role::Player,
            text: player_text.clone(),
            reply_to: Some(guidance_post_id),
            name_mentions: vec![],
            seq: thread_posts.len() as u64,
        });
        if let Some(o) = &other {
            if rng.gen::<f64>() < 0.2 {
                let r: u8 = rng.gen_range(1..=20);
                thread_posts.push(Post {
                    id: pid(thread_posts.len()),
                    author: o.clone(),
                    role: Role::Player,
                    text: format!("I'll help as well. I got a {r}"),
                    reply_to: Some(action_id.clone()),
                    name_mentions: vec![],
                    seq: thread_posts.len() as u64,
                });
            }
        }

        let dm_sentences = split_sentences(&dm_text);
        if dm_sentences != sentences {
            return Err(Error::Data(format!(
                "synthetic DM post in {thread} does not split into its sentences"
            )));
        }
        let id = episode_id_for(&action_id);
        labels.push(GoldLabel {
            id: id.clone(),
            guidance_index: g_idx,
            template_id: gold_template.id.clone(),
            guidance_sentence: sentences[g_idx].clone(),
            intent_text: intent_text.clone(),
            intended_action: intended.clone(),
            player_action: player_action.clone(),
            noisy,
            distractor_index,
        });
        episodes.push(Episode {
            split: assign_split(&id),
            id,
            context,
            dm_text,
            dm_sentences,
            guidance_index: Some(g_idx),
            player_name: player,
            player_text,
            player_action,
            intent_text: Some(intent_text),
            intended_action: Some(intended),
            provenance: Provenance::Synthetic,
        });
        posts.extend(thread_posts);
    }
    Ok(SynthCorpus {
        posts,
        episodes,
        labels,
    })
}

pub fn write_gold(
    path: &std::path::Path,
    header: Option<&crate::persist::ArtifactHeader>,
    labels: &[GoldLabel],
) -> Result<()> {
    crate::persist::write_jsonl(path, header, labels)
}

pub fn read_gold(path: &std::path::Path) -> Result<Vec<GoldLabel>> {
    crate::persist::read_jsonl(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::ActionSet;
    use crate::corpus::{build_all_episodes, CheckDetector, DEFAULT_WINDOW};
    use std::collections::{HashMap, HashSet};

    fn small(n: usize, eta: f64, mode: SynthMode) -> SynthConfig {
        SynthConfig {
            n_episodes: n,
            seed: 7,
            eta,
            mode,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn default_bank_is_valid_and_covers_default_actions() {
        let bank = default_bank();
        let actions = validate_bank(&bank).unwrap();
        let names: Vec<&str> = actions.iter().map(|a| a.as_str()).collect();
        assert_eq!(names, crate::action::DEFAULT_ACTIONS);
    }

    #[test]
    fn cue_tokens_are_private_to_their_action() {
        let bank = default_bank();
        for t in &bank {
            for c in &t.cue_tokens {
                assert!(tokenize(&t.pattern).contains(c), "{} lacks cue {c}", t.id);
            }
        }
        for t in &bank {
            let toks: HashSet<String> = tokenize(&t.pattern).into_iter().collect();
            for u in bank.iter().filter(|u| u.action != t.action) {
                for c in &u.cue_tokens {
                    assert!(!toks.contains(c), "{} contains cue {c} of {}", t.id, u.id);
                }
            }
        }
    }

    #[test]
    fn stock_and_names_carry_no_cues_or_action_names() {
        let bank = default_bank();
        let cues: HashSet<&str> = bank
            .iter()
            .flat_map(|t| t.cue_tokens.iter().map(String::as_str))
            .collect();
        let actions = ActionSet::default_23();
        let cfg = SynthConfig::default();
        let mut texts: Vec<String> = Vec::new();
        for s in non_guidance_stock() {
            for e in &cfg.entity_pool {
                for p in &cfg.place_pool {
                    texts.push(fill_slots(s, e, p).replace("{other}", "Vi"));
                }
            }
        }
        texts.extend(cfg.player_pool.iter().cloned());
        for text in &texts {
            let toks = tokenize(text);
            for t in &toks {
                assert!(!cues.contains(t.as_str()), "`{text}` contains cue `{t}`");
            }
            assert!(actions.earliest_mention(&toks).is_none(), "`{text}` names an action");
        }
    }

    #[test]
    fn worked_examples_for_rule_player() {
        let bank = default_bank();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            rule_player_act("You notice some movements in the bushes", &bank, 0.0, &mut rng).as_str(),
            "perception"
        );
        assert_eq!(
            rule_player_act("The guard seems a bit shaken to hear your words", &bank, 0.0, &mut rng)
                .as_str(),
            "persuasion"
        );
    }

    #[test]
    fn earliest_cue_wins() {
        let m = CueMatcher::new(&default_bank());
        let text = "Deep shadows fall. You notice some movements in the bushes.";
        assert_eq!(m.earliest(text).unwrap().as_str(), "stealth");
        assert!(m.earliest("Nothing here.").is_none());
    }

    #[test]
    fn full_noise_is_uniform() {
        let bank = default_bank();
        let m = CueMatcher::new(&bank);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let k = m.actions().len();
        let mut counts = vec![0usize; k];
        let draws = 10_000;
        for _ in 0..draws {
            let a = m.act("You notice some movements in the bushes.", 1.0, &mut rng);
            counts[m.actions().iter().position(|x| *x == a).unwrap()] += 1;
        }
        let expected = draws as f64 / k as f64;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let p = 1.0 - ChiSquared::new((k - 1) as f64).unwrap().cdf(chi2);
        assert!(p > 0.001, "chi2 = {chi2}, p = {p}");
    }

    #[test]
    fn same_config_same_corpus() {
        let bank = default_bank();
        let a = generate_corpus(&small(50, 0.1, SynthMode::Plain), &bank).unwrap();
        let b = generate_corpus(&small(50, 0.1, SynthMode::Plain), &bank).unwrap();
        assert_eq!(
            serde_json::to_string(&a.posts).unwrap(),
            serde_json::to_string(&b.posts).unwrap()
        );
        assert_eq!(a.episodes, b.episodes);
        let c = generate_corpus(&SynthConfig { seed: 8, ..small(50, 0.1, SynthMode::Plain) }, &bank)
            .unwrap();
        assert_ne!(a.episodes, c.episodes);
    }

    #[test]
    fn exact_episode_count_and_valid_episodes() {
        let corpus = generate_corpus(&small(100, 0.1, SynthMode::Plain), &default_bank()).unwrap();
        assert_eq!(corpus.episodes.len(), 100);
        assert_eq!(corpus.labels.len(), 100);
        for e in &corpus.episodes {
            e.validate().unwrap();
            let n = e.dm_sentences.len();
            assert!((5..=13).contains(&n), "{n} sentences");
        }
    }

    #[test]
    fn oracle_consistency_at_zero_noise() {
        let bank = default_bank();
        let m = CueMatcher::new(&bank);
        for mode in [SynthMode::Plain, SynthMode::Ambiguous] {
            let corpus = generate_corpus(&small(300, 0.0, mode), &bank).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            for (e, g) in corpus.episodes.iter().zip(&corpus.labels) {
                let rule = m.act(&e.dm_text, 0.0, &mut rng);
                assert_eq!(Some(&rule), e.intended_action.as_ref());
                assert_eq!(rule, e.player_action);
                assert!(!g.noisy);
                let cued = m.earliest(e.guidance_sentence().unwrap()).unwrap();
                assert_eq!(*cued, e.player_action);
            }
        }
    }

    #[test]
    fn ambiguous_posts_hold_two_guidance_sentences() {
        let bank = default_bank();
        let m = CueMatcher::new(&bank);
        let corpus = generate_corpus(&small(200, 0.3, SynthMode::Ambiguous), &bank).unwrap();
        for (e, g) in corpus.episodes.iter().zip(&corpus.labels) {
            let cued: Vec<&ActionLabel> =
                e.dm_sentences.iter().filter_map(|s| m.earliest(s)).collect();
            assert_eq!(cued.len(), 2, "{}", e.id);
            assert_ne!(cued[0], cued[1]);
            let d = g.distractor_index.unwrap();
            assert_ne!(d, g.guidance_index);
            if cued.contains(&&e.player_action) {
                assert_eq!(m.earliest(&e.dm_sentences[g.guidance_index]), Some(&e.player_action));
            }
        }
    }

    #[test]
    fn posts_reconstruct_gold_episodes() {
        let corpus = generate_corpus(&small(400, 0.1, SynthMode::Plain), &default_bank()).unwrap();
        let detector = CheckDetector::new(ActionSet::default_23());
        let rebuilt = build_all_episodes(corpus.posts.clone(), &detector, DEFAULT_WINDOW);
        let by_id: HashMap<&str, &Episode> = rebuilt.iter().map(|e| (e.id.as_str(), e)).collect();
        let mut matched = 0;
        for gold in &corpus.episodes {
            if let Some(r) = by_id.get(gold.id.as_str()) {
                if r.dm_text == gold.dm_text
                    && r.context == gold.context
                    && r.player_action == gold.player_action
                    && r.player_text == gold.player_text
                    && r.split == gold.split
                {
                    matched += 1;
                }
            }
        }
        assert!(matched as f64 >= 0.95 * corpus.episodes.len() as f64, "{matched}");
        assert_eq!(rebuilt.len(), corpus.episodes.len());
    }

    #[test]
    fn single_action_bank_rejected() {
        let bank = vec![GuidanceTemplate::new("p", "perception", "You notice movement.", &["movement"])];
        assert!(generate_corpus(&small(10, 0.0, SynthMode::Plain), &bank).is_err());
    }

    #[test]
    fn invalid_config_rejected() {
        let bank = default_bank();
        assert!(generate_corpus(&small(0, 0.0, SynthMode::Plain), &bank).is_err());
        assert!(generate_corpus(&small(5, 1.5, SynthMode::Plain), &bank).is_err());
    }

    #[test]
    fn gold_sidecar_round_trip() {
        let corpus = generate_corpus(&small(20, 0.1, SynthMode::Ambiguous), &default_bank()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gold.jsonl");
        write_gold(&path, None, &corpus.labels).unwrap();
        assert_eq!(read_gold(&path).unwrap(), corpus.labels);
    }
}
