#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ovdst/gateway.hpp"

namespace ovdst {

// A prompt template with named {placeholders}. Braces that do not enclose a
// bare identifier (for example "{ slotname: slotvalue }") are literal text.
struct PromptAsset {
    std::string id;
    Stage stage = Stage::SrpTracking;
    std::string model_key;
    std::string template_text;
    std::set<std::string> placeholders;

    // Throws ConfigError when a placeholder is left unbound.
    std::string render(const std::map<std::string, std::string>& bindings) const;
};

std::set<std::string> extract_placeholders(std::string_view template_text);
std::string sha256_hex(std::string_view data);

// Plain-text templates plus a manifest.json listing stage, model key,
// placeholders and a sha256 of each file.
class AssetLibrary {
public:
    // Throws IoError / FormatError; the checksum of every file is verified.
    static AssetLibrary load(const std::filesystem::path& dir);
    // OVDST_ASSET_DIR, then the source tree, then the install prefix.
    static std::filesystem::path default_dir();
    static AssetLibrary load_default() { return load(default_dir()); }

    const PromptAsset* find(Stage stage, std::string_view model_key) const;
    // Throws MissingAsset.
    const PromptAsset& get(Stage stage, std::string_view model_key) const;
    // SRP asset for a model; unknown models fall back to gpt-4-turbo.
    const PromptAsset& srp_asset(std::string_view model) const;

    // Adds or replaces the asset with the same (stage, model_key).
    void put(PromptAsset asset);
    // Writes every asset file and the manifest into dir.
    void save(const std::filesystem::path& dir) const;

    const std::vector<PromptAsset>& assets() const noexcept { return assets_; }

private:
    std::vector<PromptAsset> assets_;
};

} // namespace ovdst
