#pragma once

#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "rlver/error.hpp"
#include "rlver/prompt_assets.hpp"

namespace rlver {

/// Bumped whenever an asset under assets/prompts changes meaning; it is folded
/// into gateway cache keys through the rendered text and into config hashes.
inline constexpr std::string_view kPromptVersion = "1";

using SlotValues = std::map<std::string, std::string, std::less<>>;

namespace detail {
inline bool is_slot_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
}
}  // namespace detail

/// Names of the `{slot}` placeholders in a template, in order of appearance.
inline std::vector<std::string> template_slots(std::string_view tpl) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < tpl.size(); ++i) {
    if (tpl[i] != '{') continue;
    std::size_t j = i + 1;
    while (j < tpl.size() && detail::is_slot_char(tpl[j])) ++j;
    if (j < tpl.size() && tpl[j] == '}' && j > i + 1) {
      out.emplace_back(tpl.substr(i + 1, j - i - 1));
      i = j;
    }
  }
  return out;
}

/// Single-pass substitution: values are inserted verbatim and never rescanned.
/// A slot without a value, or with an empty value, is a configuration error.
inline std::string render_template(std::string_view tpl, const SlotValues& values) {
  std::string out;
  out.reserve(tpl.size() + 256);
  for (std::size_t i = 0; i < tpl.size(); ++i) {
    if (tpl[i] == '{') {
      std::size_t j = i + 1;
      while (j < tpl.size() && detail::is_slot_char(tpl[j])) ++j;
      if (j < tpl.size() && tpl[j] == '}' && j > i + 1) {
        auto name = tpl.substr(i + 1, j - i - 1);
        auto it = values.find(name);
        if (it == values.end() || it->second.empty()) {
          throw ConfigError("prompt slot {" + std::string(name) + "} has no value");
        }
        out += it->second;
        i = j;
        continue;
      }
    }
    out.push_back(tpl[i]);
  }
  return out;
}

/// Prompt templates by asset name. Starts from the embedded assets; a directory
/// of `<name>.txt` files can override any of them.
class PromptLibrary {
 public:
  PromptLibrary() {
    for (const auto& a : assets::kPromptAssets) templates_.emplace(std::string(a.name), std::string(a.text));
  }

  static const PromptLibrary& builtin() {
    static const PromptLibrary lib;
    return lib;
  }

  void load_overrides(const std::filesystem::path& dir) {
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
      if (!e.is_regular_file() || e.path().extension() != ".txt") continue;
      std::ifstream in(e.path());
      std::ostringstream ss;
      ss << in.rdbuf();
      templates_[e.path().stem().string()] = ss.str();
    }
  }

  const std::string& get(std::string_view name) const {
    auto it = templates_.find(name);
    if (it == templates_.end()) throw ConfigError("no prompt template named " + std::string(name));
    return it->second;
  }

  std::string render(std::string_view name, const SlotValues& values) const {
    return render_template(get(name), values);
  }

 private:
  std::map<std::string, std::string, std::less<>> templates_;
};

}  // namespace rlver
