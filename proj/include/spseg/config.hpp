#pragma once

#include "spseg/pipeline.hpp"
#include "spseg/synth.hpp"

#include <string>
#include <utility>
#include <vector>

namespace spseg {

// Flat "key = value" text. '#' starts a comment, blank lines are skipped and
// a repeated key is an error. Order of appearance is kept.
using KeyValues = std::vector<std::pair<std::string, std::string>>;

KeyValues parse_key_values(const std::string& text, const std::string& source = "<config>");
KeyValues read_key_values(const std::string& path);

// Unknown keys and malformed values throw std::invalid_argument naming the key.
TrainConfig train_config_from(const KeyValues& kv, TrainConfig base = {});
SynthSpec synth_spec_from(const KeyValues& kv, SynthSpec base = {});

// Canonical key = value text; parsing it back gives the same settings.
// The seed is not part of either text.
std::string to_text(const TrainConfig& config);
std::string to_text(const SynthSpec& spec);

}  // namespace spseg
