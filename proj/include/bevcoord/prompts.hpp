#pragma once

#include <map>
#include <string>
#include <vector>

namespace bevcoord {

// Fixed prompt texts for the five stages of the chain-of-prompt reasoning
// workflow: structured scene parsing (T_parse), systematic risk assessment
// (T_risk), decision reasoning (T_reason), introspective verification
// (T_verify), and revision (T_revision). The instruction text is frozen;
// golden-file tests pin each rendering byte for byte.
//
// Templates contain {{name}} placeholders. render_prompt substitutes every
// placeholder from `slots` and fails loudly (naming the slot) when a required
// one is absent, so a caller can never ship a prompt with a hole in it. The
// only optional slot is T_reason's auxiliary description "A", which defaults
// to "(none)": the workflow treats A as non-binding context that may be
// missing entirely.

// Names accepted by render_prompt.
const std::vector<std::string>& prompt_template_names();

// Raw template text with placeholders intact. Unknown name -> ConfigError.
const std::string& prompt_template(const std::string& name);

// Placeholders required by the named template, in order of appearance.
std::vector<std::string> prompt_slots(const std::string& name);

// Substitutes slots into the named template. Unknown template or missing
// required slot -> ConfigError naming the offender. Extra slots are ignored.
std::string render_prompt(const std::string& name,
                          const std::map<std::string, std::string>& slots);

}  // namespace bevcoord
