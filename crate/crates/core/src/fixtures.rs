//! The reference home: six devices and the 28 services they expose, plus
//! the matching user turn and gold assistant turn.

use crate::prompt::{parse_system_prompt, SystemContext};

pub const DEFAULT_PREAMBLE: &str = "You are 'Al', a helpful AI Assistant that controls the devices in a house. Complete the following task as instructed or answer the following question with the information provided only.";

pub const REFERENCE_SYSTEM_PROMPT: &str = "You are 'Al', a helpful AI Assistant that controls the devices in a house. Complete the following task as instructed or answer the following question with the information provided only.
Services: cover.close_cover(), cover.open_cover(), cover.stop_cover(), cover.toggle(), lock.lock(), lock.unlock(), media_player.media_next_track(), media_player.media_pause(), media_player.media_play(), media_player.media_play_pause(), media_player.media_previous_track(), media_player.media_stop(), media_player.toggle(), media_player.turn_off(), media_player.turn_on(), media_player.volume_down(), media_player.volume_mute(), media_player.volume_up(), switch.toggle(), switch.turn_off(), switch.turn_on(), timer.cancel(), timer.pause(), timer.start(duration), vacuum.pause(), vacuum.return_to_base(), vacuum.start(), vacuum.stop()
Devices: media_player.harman_kardon_aura 'Harman Kardon Glass Speaker' = standby; vol=0.88
timer.kitchen_oven 'Kitchen oven timer' = active
lock.office_cabinet 'Office cabinet lock' = unlocked
cover.master_bedroom 'Master Bedroom' = closed
vacuum.hallway_neato 'Hallway path cleaner' = docked
switch.basement_lights 'Basement Lights Switch' = off";

pub const REFERENCE_USER: &str = "reverse the master bedroom blinds";

pub const REFERENCE_ASSISTANT: &str = "switching Master Bedroom state as requested
```homeassistant
{
  \"service\": \"cover.toggle\",
  \"target_device\": \"cover.master_bedroom\"
}
```";

pub const REFERENCE_RESPONSE_TEXT: &str = "switching Master Bedroom state as requested";

/// The default home used when a session is created without configuration.
pub fn default_context() -> SystemContext {
    parse_system_prompt(REFERENCE_SYSTEM_PROMPT).expect("built-in home parses")
}

/// The reference record as a dataset conversation (system, user, assistant).
pub fn reference_record_json() -> String {
    serde_json::json!([
        {"from": "system", "value": REFERENCE_SYSTEM_PROMPT},
        {"from": "user", "value": REFERENCE_USER},
        {"from": "assistant", "value": REFERENCE_ASSISTANT},
    ])
    .to_string()
}
