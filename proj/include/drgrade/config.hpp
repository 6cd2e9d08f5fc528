#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "drgrade/trainer.hpp"

namespace drgrade {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Flat "key = value" lines; '#' starts a comment, blank lines are
/// ignored. Later duplicates win when applied.
KeyValues parse_key_values(const std::string& text);
KeyValues read_config_file(const std::filesystem::path& path);

/// Applies one documented setting. Unknown keys and malformed values throw
/// InvalidArgument naming the key.
void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Architecture is resolved first (overrides, then file, then "method1")
/// and its defaults are loaded; file settings then override settings apply.
TrainConfig make_train_config(const KeyValues& file, const KeyValues& overrides);

/// Keys accepted by apply_setting, in documentation order.
const std::vector<std::string>& config_keys();

ClassWeights parse_class_weights(const std::string& s);
std::vector<std::size_t> parse_size_list(const std::string& s);
double parse_double(const std::string& key, const std::string& s);
std::size_t parse_size(const std::string& key, const std::string& s);
std::uint64_t parse_u64(const std::string& key, const std::string& s);
bool parse_bool(const std::string& key, const std::string& s);

}  // namespace drgrade
