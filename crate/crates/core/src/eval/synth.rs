//! Seeded generator for conversation records in the dataset format.
//!
//! Each record gets its own randomly furnished home, a user utterance for
//! one target device, and a gold assistant turn (reply plus fenced action).
//! Per-class record counts default to the published class distribution.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::model::{
    Device, DeviceRegistry, DeviceState, EntityId, RawAction, Scalar, ServiceCatalog, ServiceSignature,
};
use crate::parser::render_action_block;
use crate::prompt::{render_system_prompt, Role, SystemContext, Turn};

/// Class inventory: `(class, records in full dataset, records in the LLM
/// test split)`.
pub const CLASS_DISTRIBUTION: [(&str, usize, usize); 38] = [
    ("climate.set_fan_mode", 1080, 0),
    ("climate.set_humidity", 1080, 0),
    ("climate.set_hvac_mode", 1080, 0),
    ("climate.set_temperature", 1000, 0),
    ("cover.close", 385, 35),
    ("cover.open", 395, 40),
    ("cover.stop", 320, 25),
    ("cover.toggle", 365, 25),
    ("fan.decrease_speed", 360, 60),
    ("fan.increase_speed", 300, 40),
    ("fan.toggle", 390, 85),
    ("fan.turn_off", 390, 70),
    ("fan.turn_on", 405, 60),
    ("light.toggle", 450, 90),
    ("light.turn_off", 2535, 600),
    ("light.turn_on", 11940, 150),
    ("lock.lock", 200, 125),
    ("lock.unlock", 185, 125),
    ("media_player.media_next_track", 55, 25),
    ("media_player.media_pause", 55, 25),
    ("media_player.media_play", 70, 25),
    ("media_player.media_previous_track", 55, 25),
    ("media_player.media_stop", 55, 25),
    ("media_player.turn_off", 25, 25),
    ("media_player.turn_on", 40, 40),
    ("media_player.volume_down", 65, 35),
    ("media_player.volume_mute", 60, 30),
    ("media_player.volume_up", 85, 40),
    ("switch.toggle", 250, 50),
    ("switch.turn_off", 500, 175),
    ("switch.turn_on", 540, 165),
    ("timer.cancel", 600, 0),
    ("timer.start", 600, 0),
    ("todo.add_item", 1560, 0),
    ("vacuum.pause", 15, 0),
    ("vacuum.return_to_base", 150, 0),
    ("vacuum.start", 370, 220),
    ("vacuum.stop", 15, 0),
];

pub fn class_totals() -> BTreeMap<String, usize> {
    CLASS_DISTRIBUTION.iter().map(|(c, n, _)| (c.to_string(), *n)).collect()
}

pub fn class_test_counts() -> BTreeMap<String, usize> {
    CLASS_DISTRIBUTION.iter().map(|(c, _, t)| (c.to_string(), *t)).collect()
}

/// Services listed in a system prompt for each domain, in prompt order.
fn domain_services(domain: &str) -> &'static [&'static str] {
    match domain {
        "climate" => &[
            "set_fan_mode(fan_mode)",
            "set_humidity(humidity)",
            "set_hvac_mode(hvac_mode)",
            "set_temperature(temperature)",
        ],
        "cover" => &["close_cover()", "open_cover()", "stop_cover()", "toggle()"],
        "fan" => &[
            "decrease_speed()",
            "increase_speed()",
            "toggle()",
            "turn_off()",
            "turn_on()",
        ],
        "light" | "switch" => &["toggle()", "turn_off()", "turn_on()"],
        "lock" => &["lock()", "unlock()"],
        "media_player" => &[
            "media_next_track()",
            "media_pause()",
            "media_play()",
            "media_play_pause()",
            "media_previous_track()",
            "media_stop()",
            "toggle()",
            "turn_off()",
            "turn_on()",
            "volume_down()",
            "volume_mute()",
            "volume_up()",
        ],
        "timer" => &["cancel()", "pause()", "start(duration)"],
        "todo" => &["add_item(item)"],
        "vacuum" => &["pause()", "return_to_base()", "start()", "stop()"],
        _ => &[],
    }
}

/// `(object_id, friendly name, spoken aliases)`
type DeviceSpec = (&'static str, &'static str, &'static [&'static str]);

fn device_pool(domain: &str) -> &'static [DeviceSpec] {
    match domain {
        "light" => &[
            ("kitchen", "Kitchen Light", &["kitchen light", "lights in the kitchen"]),
            (
                "living_room",
                "Living Room Lamp",
                &["living room lamp", "lamp in the living room"],
            ),
            (
                "bedroom_ceiling",
                "Bedroom Ceiling Light",
                &["bedroom ceiling light", "bedroom light"],
            ),
            ("porch", "Porch Light", &["porch light", "front porch light"]),
            ("office_desk", "Office Desk Lamp", &["office desk lamp", "desk lamp"]),
            ("hallway", "Hallway Light", &["hallway light", "hall lights"]),
            ("garage", "Garage Light", &["garage light", "lights in the garage"]),
            (
                "dining_room",
                "Dining Room Chandelier",
                &["dining room chandelier", "chandelier"],
            ),
            ("bathroom", "Bathroom Light", &["bathroom light", "bathroom lights"]),
            (
                "nursery",
                "Nursery Night Light",
                &["nursery night light", "night light"],
            ),
            ("patio", "Patio String Lights", &["patio string lights", "patio lights"]),
            ("stairway", "Stairway Sconces", &["stairway sconces", "stair lights"]),
        ],
        "switch" => &[
            (
                "basement_lights",
                "Basement Lights Switch",
                &["basement lights switch", "basement switch"],
            ),
            (
                "coffee_maker",
                "Coffee Maker Plug",
                &["coffee maker plug", "coffee maker"],
            ),
            ("garden_pump", "Garden Pump", &["garden pump", "pump in the garden"]),
            (
                "christmas_tree",
                "Christmas Tree Lights",
                &["christmas tree lights", "tree lights"],
            ),
            (
                "space_heater",
                "Space Heater Outlet",
                &["space heater outlet", "space heater"],
            ),
            ("tv_outlet", "TV Outlet", &["tv outlet", "outlet behind the tv"]),
        ],
        "fan" => &[
            (
                "bedroom_ceiling_fan",
                "Bedroom Ceiling Fan",
                &["bedroom ceiling fan", "ceiling fan in the bedroom"],
            ),
            (
                "living_room_fan",
                "Living Room Fan",
                &["living room fan", "fan in the living room"],
            ),
            ("office_fan", "Office Desk Fan", &["office desk fan", "office fan"]),
            ("attic", "Attic Exhaust Fan", &["attic exhaust fan", "attic fan"]),
            (
                "bathroom_fan",
                "Bathroom Vent Fan",
                &["bathroom vent fan", "bathroom fan"],
            ),
        ],
        "cover" => &[
            (
                "master_bedroom",
                "Master Bedroom",
                &["master bedroom blinds", "blinds in the master bedroom"],
            ),
            ("garage_door", "Garage Door", &["garage door", "door of the garage"]),
            (
                "living_room_blinds",
                "Living Room Blinds",
                &["living room blinds", "blinds in the living room"],
            ),
            (
                "kitchen_shades",
                "Kitchen Shades",
                &["kitchen shades", "shades in the kitchen"],
            ),
            ("patio_awning", "Patio Awning", &["patio awning", "awning"]),
        ],
        "lock" => &[
            (
                "office_cabinet",
                "Office cabinet lock",
                &["office cabinet lock", "office cabinet"],
            ),
            ("front_door", "Front Door Lock", &["front door lock", "front door"]),
            ("back_door", "Back Door Lock", &["back door lock", "back door"]),
            ("garage_side", "Garage Side Door", &["garage side door", "side door"]),
        ],
        "media_player" => &[
            (
                "harman_kardon_aura",
                "Harman Kardon Glass Speaker",
                &["harman kardon glass speaker", "glass speaker"],
            ),
            ("living_room_tv", "Living Room TV", &["living room tv", "television"]),
            (
                "kitchen_echo",
                "Kitchen Smart Speaker",
                &["kitchen smart speaker", "kitchen speaker"],
            ),
            ("bedroom_sonos", "Bedroom Sonos", &["bedroom sonos", "sonos"]),
        ],
        "timer" => &[
            (
                "kitchen_oven",
                "Kitchen oven timer",
                &["kitchen oven timer", "oven timer"],
            ),
            ("laundry", "Laundry timer", &["laundry timer", "timer for the laundry"]),
            ("tea", "Tea steeping timer", &["tea steeping timer", "tea timer"]),
            ("workout", "Workout timer", &["workout timer", "exercise timer"]),
        ],
        "vacuum" => &[
            (
                "hallway_neato",
                "Hallway path cleaner",
                &["hallway path cleaner", "hallway vacuum"],
            ),
            (
                "living_room_roomba",
                "Living Room Roomba",
                &["living room roomba", "roomba"],
            ),
            (
                "upstairs",
                "Upstairs Robot Vacuum",
                &["upstairs robot vacuum", "upstairs vacuum"],
            ),
        ],
        "climate" => &[
            (
                "living_room_thermostat",
                "Living Room Thermostat",
                &["living room thermostat", "thermostat"],
            ),
            (
                "bedroom_ac",
                "Bedroom Air Conditioner",
                &["bedroom air conditioner", "bedroom ac"],
            ),
            (
                "office_heat_pump",
                "Office Heat Pump",
                &["office heat pump", "heat pump"],
            ),
        ],
        "todo" => &[
            ("shopping_list", "Shopping List", &["shopping list", "shopping list"]),
            ("chores", "Household Chores", &["household chores list", "chores list"]),
            ("grocery", "Grocery List", &["grocery list", "groceries list"]),
        ],
        _ => &[],
    }
}

const DOMAINS: [&str; 10] = [
    "climate",
    "cover",
    "fan",
    "light",
    "lock",
    "media_player",
    "switch",
    "timer",
    "todo",
    "vacuum",
];

/// Service actually emitted for a class (cover classes use the `*_cover`
/// service names).
fn service_for_class(class: &str) -> String {
    match class {
        "cover.open" | "cover.close" | "cover.stop" => format!("{class}_cover"),
        other => other.to_string(),
    }
}

/// `(utterance templates, reply templates)`. `{d}` is a device alias,
/// `{name}` its friendly name, `{p}` the spoken parameter.
fn templates(class: &str) -> (&'static [&'static str], &'static [&'static str]) {
    match class.split_once('.').map(|(_, s)| s).unwrap_or_default() {
        _ if class == "cover.toggle" => (
            &["reverse the {d}", "toggle the {d}", "flip the {d} the other way"],
            &["switching {name} state as requested", "reversing the {name} for you"],
        ),
        _ if class.starts_with("media_player.turn_") || class == "media_player.media_stop" => match class {
            "media_player.turn_on" => (
                &["turn on the {d}", "power up the {d}", "wake the {d}"],
                &["Turning on the {name}.", "Powering up {name} now."],
            ),
            "media_player.turn_off" => (
                &["turn off the {d}", "power down the {d}", "shut the {d} off"],
                &["Turning off the {name}.", "Powering down {name}."],
            ),
            _ => (
                &["stop playback on the {d}", "stop the music on the {d}"],
                &["Stopping playback on the {name}.", "Playback stopped on {name}."],
            ),
        },
        "turn_on" => (
            &[
                "turn on the {d}",
                "switch on the {d}",
                "please turn the {d} on",
                "can you power on the {d}",
            ],
            &[
                "Turning on the {name}.",
                "Sure, switching on the {name}.",
                "The {name} is now on.",
            ],
        ),
        "turn_off" => (
            &[
                "turn off the {d}",
                "switch off the {d}",
                "shut off the {d}",
                "kill the {d}",
            ],
            &[
                "Turning off the {name}.",
                "Okay, the {name} is off now.",
                "Switching off {name}.",
            ],
        ),
        "toggle" => (
            &["toggle the {d}", "flip the {d}", "change the state of the {d}"],
            &["Toggling the {name}.", "Flipping {name} for you."],
        ),
        "open_cover" | "open" => (
            &["open the {d}", "raise the {d}", "let some light in with the {d}"],
            &["Opening the {name}.", "Raising {name} now."],
        ),
        "close_cover" | "close" => (
            &["close the {d}", "lower the {d}", "shut the {d}"],
            &["Closing the {name}.", "Lowering {name} now."],
        ),
        "stop_cover" | "stop" if class.starts_with("cover.") => (
            &["stop the {d}", "halt the {d}", "freeze the {d} where it is"],
            &["Stopping the {name}.", "Halting {name} right there."],
        ),
        "increase_speed" => (
            &["speed up the {d}", "increase the {d} speed", "make the {d} faster"],
            &["Increasing the speed of the {name}.", "Speeding up {name}."],
        ),
        "decrease_speed" => (
            &["slow down the {d}", "decrease the {d} speed", "make the {d} slower"],
            &["Decreasing the speed of the {name}.", "Slowing down {name}."],
        ),
        "lock" => (
            &["lock the {d}", "secure the {d}", "make sure the {d} is locked"],
            &["Locking the {name}.", "{name} is now locked."],
        ),
        "unlock" => (
            &["unlock the {d}", "unbolt the {d}", "let me in through the {d}"],
            &["Unlocking the {name}.", "{name} is now unlocked."],
        ),
        "media_next_track" => (
            &[
                "skip to the next track on the {d}",
                "next song on the {d}",
                "skip this song on the {d}",
            ],
            &["Skipping to the next track on {name}.", "Next track on the {name}."],
        ),
        "media_previous_track" => (
            &[
                "go back a track on the {d}",
                "previous song on the {d}",
                "replay the last song on the {d}",
            ],
            &["Going back a track on {name}.", "Previous track on the {name}."],
        ),
        "media_pause" => (
            &[
                "pause the {d}",
                "pause the music on the {d}",
                "hold playback on the {d}",
            ],
            &["Pausing the {name}.", "Playback paused on {name}."],
        ),
        "media_play" => (
            &["play music on the {d}", "resume the {d}", "start playing on the {d}"],
            &["Resuming playback on the {name}.", "Playing on {name} now."],
        ),
        "volume_up" => (
            &["turn up the {d}", "louder on the {d}", "raise the volume of the {d}"],
            &["Turning up the volume on {name}.", "Making the {name} louder."],
        ),
        "volume_down" => (
            &[
                "turn down the {d}",
                "quieter on the {d}",
                "reduce the volume of the {d}",
            ],
            &["Turning down the volume on {name}.", "Making the {name} quieter."],
        ),
        "volume_mute" => (
            &["mute the {d}", "silence the {d}", "no sound from the {d} please"],
            &["Muting the {name}.", "{name} is muted."],
        ),
        "start" if class.starts_with("timer.") => (
            &["start the {d} for {p}", "set the {d} to {p}", "run the {d} for {p}"],
            &["Starting the {name} for {p}.", "{name} set for {p}."],
        ),
        "cancel" => (
            &["cancel the {d}", "clear the {d}", "i don't need the {d} anymore"],
            &["Cancelling the {name}.", "{name} cancelled."],
        ),
        "start" => (
            &[
                "start the {d}",
                "have the {d} clean the floor",
                "begin cleaning with the {d}",
            ],
            &["Starting the {name}.", "{name} is now cleaning."],
        ),
        "pause" => (
            &["pause the {d}", "hold on with the {d}", "pause cleaning on the {d}"],
            &["Pausing the {name}.", "{name} paused."],
        ),
        "stop" => (
            &["stop the {d}", "stop cleaning with the {d}", "halt the {d}"],
            &["Stopping the {name}.", "{name} stopped."],
        ),
        "return_to_base" => (
            &[
                "send the {d} back to its dock",
                "return the {d} to base",
                "dock the {d}",
            ],
            &["Sending {name} back to its dock.", "{name} is returning to base."],
        ),
        "set_temperature" => (
            &[
                "set the {d} to {p} degrees",
                "make it {p} degrees on the {d}",
                "change the {d} temperature to {p}",
            ],
            &["Setting the {name} to {p} degrees.", "{name} set to {p} degrees."],
        ),
        "set_humidity" => (
            &["set the {d} humidity to {p} percent", "keep humidity at {p} on the {d}"],
            &[
                "Setting humidity on {name} to {p} percent.",
                "{name} humidity set to {p}.",
            ],
        ),
        "set_hvac_mode" => (
            &[
                "switch the {d} to {p} mode",
                "put the {d} in {p} mode",
                "set the {d} mode to {p}",
            ],
            &["Setting {name} to {p} mode.", "{name} is now in {p} mode."],
        ),
        "set_fan_mode" => (
            &[
                "set the {d} fan to {p}",
                "change the {d} fan mode to {p}",
                "run the {d} fan on {p}",
            ],
            &["Setting the {name} fan to {p}.", "{name} fan mode is {p}."],
        ),
        "add_item" => (
            &["add {p} to the {d}", "put {p} on my {d}", "remember {p} on the {d}"],
            &["Adding {p} to the {name}.", "{p} added to {name}."],
        ),
        _ => (&["use the {d}"], &["Done with {name}."]),
    }
}

/// Parameter value and its spoken form for parameterized classes.
fn draw_param(class: &str, rng: &mut ChaCha8Rng) -> Option<(&'static str, Scalar, String)> {
    Some(match class {
        "timer.start" => {
            let (v, spoken) = *[
                ("00:05:00", "5 minutes"),
                ("00:10:00", "10 minutes"),
                ("00:15:00", "15 minutes"),
                ("00:30:00", "half an hour"),
                ("01:00:00", "an hour"),
            ]
            .choose(rng)
            .unwrap();
            ("duration", Scalar::from(v), spoken.to_string())
        }
        "climate.set_temperature" => {
            let t = rng.gen_range(64..=78) as f64;
            ("temperature", Scalar::Number(t), t.to_string())
        }
        "climate.set_humidity" => {
            let h = (rng.gen_range(6..=12) * 5) as f64;
            ("humidity", Scalar::Number(h), h.to_string())
        }
        "climate.set_hvac_mode" => {
            let m = *["heat", "cool", "auto", "off", "dry"].choose(rng).unwrap();
            ("hvac_mode", Scalar::from(m), m.to_string())
        }
        "climate.set_fan_mode" => {
            let m = *["low", "medium", "high", "auto"].choose(rng).unwrap();
            ("fan_mode", Scalar::from(m), m.to_string())
        }
        "todo.add_item" => {
            let m = *[
                "milk",
                "eggs",
                "dish soap",
                "batteries",
                "coffee beans",
                "call the plumber",
            ]
            .choose(rng)
            .unwrap();
            ("item", Scalar::from(m), m.to_string())
        }
        _ => return None,
    })
}

fn random_state(domain: &str, rng: &mut ChaCha8Rng) -> DeviceState {
    let pick = |rng: &mut ChaCha8Rng, xs: &[&str]| xs.choose(rng).unwrap().to_string();
    match domain {
        "media_player" => {
            let vol = rng.gen_range(0..=100) as f64 / 100.0;
            DeviceState::new(&pick(rng, &["playing", "paused", "standby", "off", "on"])).with_attr("vol", vol)
        }
        "climate" => DeviceState::new(&pick(rng, &["heat", "cool", "auto", "off"]))
            .with_attr("temperature", rng.gen_range(62..=80) as f64)
            .with_attr("humidity", (rng.gen_range(6..=12) * 5) as f64),
        "todo" => DeviceState::new(&rng.gen_range(0..8).to_string()),
        "fan" => {
            DeviceState::new(&pick(rng, &["on", "off"])).with_attr("percentage", (rng.gen_range(0..=4) * 25) as f64)
        }
        "cover" => DeviceState::new(&pick(rng, &["open", "closed"])),
        "timer" => DeviceState::new(&pick(rng, &["active", "idle", "paused"])),
        "vacuum" => DeviceState::new(&pick(rng, &["docked", "cleaning", "paused", "returning"])),
        "lock" => DeviceState::new(&pick(rng, &["locked", "unlocked"])),
        _ => DeviceState::new(&pick(rng, &["on", "off"])),
    }
}

fn fill(template: &str, alias: &str, name: &str, param: &str) -> String {
    template
        .replace("{d}", alias)
        .replace("{name}", name)
        .replace("{p}", param)
}

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub seed: u64,
    pub counts: BTreeMap<String, usize>,
    /// Share of records that carry a second action.
    pub multi_intent_rate: f64,
    /// Distractor devices per home, inclusive range.
    pub distractors: (usize, usize),
}

impl SynthSpec {
    /// Full-size class distribution.
    pub fn full(seed: u64) -> Self {
        SynthSpec {
            seed,
            counts: class_totals(),
            multi_intent_rate: 0.03,
            distractors: (3, 6),
        }
    }

    /// The class distribution scaled to about `total` records; every class
    /// keeps at least one record.
    pub fn scaled(seed: u64, total: usize) -> Self {
        let full: usize = CLASS_DISTRIBUTION.iter().map(|(_, n, _)| n).sum();
        let counts = CLASS_DISTRIBUTION
            .iter()
            .map(|(c, n, _)| {
                (
                    c.to_string(),
                    ((*n * total) as f64 / full as f64).round().max(1.0) as usize,
                )
            })
            .collect();
        SynthSpec {
            counts,
            ..SynthSpec::full(seed)
        }
    }
}

struct Intent {
    action: RawAction,
    utterance: String,
    reply: String,
}

fn make_intent(class: &str, device: &Device, alias: &str, rng: &mut ChaCha8Rng) -> Intent {
    let (utterances, replies) = templates(class);
    let mut action = RawAction::new(&service_for_class(class), &device.id.to_string());
    let spoken = match draw_param(class, rng) {
        Some((name, value, spoken)) => {
            action.params.insert(name.to_string(), value);
            spoken
        }
        None => String::new(),
    };
    Intent {
        utterance: fill(utterances.choose(rng).unwrap(), alias, &device.friendly_name, &spoken),
        reply: fill(replies.choose(rng).unwrap(), alias, &device.friendly_name, &spoken),
        action,
    }
}

fn pick_device(domain: &str, rng: &mut ChaCha8Rng) -> (Device, &'static str) {
    let (object, name, aliases) = device_pool(domain).choose(rng).unwrap();
    let id = EntityId::new(domain, object).expect("pool ids are valid");
    let device = Device::new(id, name, random_state(domain, rng)).expect("pool devices are valid");
    (device, aliases.choose(rng).unwrap())
}

fn build_home(devices: &[Device], rng: &mut ChaCha8Rng) -> SystemContext {
    let mut shuffled = devices.to_vec();
    shuffled.shuffle(rng);
    let registry = DeviceRegistry::try_from(shuffled).expect("device ids are distinct");
    let mut domains: Vec<&str> = registry.domains();
    domains.sort_unstable();
    let mut catalog = ServiceCatalog::new();
    for domain in domains {
        for service in domain_services(domain) {
            let sig = ServiceSignature::parse(&format!("{domain}.{service}")).expect("built-in signatures parse");
            catalog.insert(sig).expect("no duplicate services");
        }
    }
    SystemContext::new(catalog, registry)
}

fn one_record(class: &str, multi: bool, spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<Turn> {
    let domain = class.split('.').next().unwrap();
    let (target, alias) = pick_device(domain, rng);
    let mut devices = vec![target.clone()];
    let n_distractors = rng.gen_range(spec.distractors.0..=spec.distractors.1);
    for _ in 0..n_distractors * 4 {
        if devices.len() > n_distractors {
            break;
        }
        let (d, _) = pick_device(DOMAINS.choose(rng).unwrap(), rng);
        if !devices.iter().any(|x| x.id == d.id) {
            devices.push(d);
        }
    }
    let mut intents = vec![make_intent(class, &target, alias, rng)];
    if multi {
        // Second action on a different parameterless device.
        let second_class = *[
            "light.turn_on",
            "light.turn_off",
            "switch.turn_on",
            "switch.turn_off",
            "lock.lock",
            "fan.turn_on",
        ]
        .choose(rng)
        .unwrap();
        let (second, second_alias) = pick_device(second_class.split('.').next().unwrap(), rng);
        if second.id != target.id {
            let second = match devices.iter().find(|d| d.id == second.id) {
                Some(existing) => existing.clone(),
                None => {
                    devices.push(second.clone());
                    second
                }
            };
            intents.push(make_intent(second_class, &second, second_alias, rng));
        }
    }
    let ctx = build_home(&devices, rng);
    let system = render_system_prompt(&ctx).expect("home is non-empty");
    let user = intents
        .iter()
        .map(|i| i.utterance.as_str())
        .collect::<Vec<_>>()
        .join(" and ");
    let reply = intents.iter().map(|i| i.reply.as_str()).collect::<Vec<_>>().join(" ");
    let blocks = intents
        .iter()
        .map(|i| render_action_block(&i.action, "target_device"))
        .collect::<Vec<_>>()
        .join("\n");
    vec![
        Turn {
            from: Role::System,
            value: system,
        },
        Turn {
            from: Role::User,
            value: user,
        },
        Turn {
            from: Role::Assistant,
            value: format!("{reply}\n{blocks}"),
        },
    ]
}

/// Generates records in class order, then shuffles them.
pub fn generate_records(spec: &SynthSpec) -> Vec<Vec<Turn>> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut records = Vec::new();
    for (class, &count) in &spec.counts {
        for _ in 0..count {
            let multi = spec.multi_intent_rate > 0.0 && rng.gen_bool(spec.multi_intent_rate.min(1.0));
            records.push(one_record(class, multi, spec, &mut rng));
        }
    }
    records.shuffle(&mut rng);
    records
}
