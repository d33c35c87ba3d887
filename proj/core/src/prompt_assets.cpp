#include "ovdst/prompt_assets.hpp"

#include <array>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <regex>
#include <sstream>

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "ovdst/errors.hpp"

namespace ovdst {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::regex& placeholder_re() {
    static const std::regex re(R"(\{([A-Za-z_][A-Za-z0-9_]*)\})");
    return re;
}

std::string file_name_for(const PromptAsset& a) { return a.id + ".txt"; }

} // namespace

std::set<std::string> extract_placeholders(std::string_view template_text) {
    std::set<std::string> out;
    const std::string s(template_text);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), placeholder_re()); it != std::sregex_iterator(); ++it) {
        out.insert((*it)[1].str());
    }
    return out;
}

std::string PromptAsset::render(const std::map<std::string, std::string>& bindings) const {
    std::string out;
    const std::string& s = template_text;
    std::size_t last = 0;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), placeholder_re()); it != std::sregex_iterator(); ++it) {
        const auto& m = *it;
        auto b = bindings.find(m[1].str());
        if (b == bindings.end()) throw ConfigError("asset " + id + ": unbound placeholder {" + m[1].str() + "}");
        out.append(s, last, static_cast<std::size_t>(m.position(0)) - last);
        out.append(b->second);
        last = static_cast<std::size_t>(m.position(0) + m.length(0));
    }
    out.append(s, last, std::string::npos);
    return out;
}

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 failed");
    }
    std::ostringstream ss;
    for (unsigned int i = 0; i < len; ++i) ss << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return ss.str();
}

AssetLibrary AssetLibrary::load(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open " + manifest_path.string());
    json manifest = json::parse(in, nullptr, false);
    if (manifest.is_discarded() || !manifest.is_array()) throw FormatError(manifest_path.string() + ": expected an array");

    AssetLibrary lib;
    for (const auto& e : manifest) {
        PromptAsset a;
        a.id = e.at("id").get<std::string>();
        auto stage = stage_from_string(e.at("stage").get<std::string>());
        if (!stage) throw FormatError(manifest_path.string() + ": unknown stage for " + a.id);
        a.stage = *stage;
        a.model_key = e.at("model_key").get<std::string>();

        const fs::path file = dir / e.at("file").get<std::string>();
        std::ifstream tf(file, std::ios::binary);
        if (!tf) throw IoError("cannot open " + file.string());
        std::ostringstream ss;
        ss << tf.rdbuf();
        a.template_text = ss.str();

        if (e.contains("sha256") && e["sha256"].get<std::string>() != sha256_hex(a.template_text)) {
            throw FormatError("checksum mismatch for prompt asset " + file.string());
        }
        const auto declared = e.at("placeholders").get<std::set<std::string>>();
        a.placeholders = extract_placeholders(a.template_text);
        if (declared != a.placeholders) {
            throw FormatError("placeholder list in manifest does not match template " + file.string());
        }
        lib.assets_.push_back(std::move(a));
    }
    return lib;
}

fs::path AssetLibrary::default_dir() {
    if (const char* env = std::getenv("OVDST_ASSET_DIR"); env != nullptr && *env != '\0') return env;
    const fs::path source = OVDST_SOURCE_ASSET_DIR;
    if (fs::exists(source / "manifest.json")) return source;
    return OVDST_INSTALL_ASSET_DIR;
}

const PromptAsset* AssetLibrary::find(Stage stage, std::string_view model_key) const {
    for (const auto& a : assets_) {
        if (a.stage == stage && a.model_key == model_key) return &a;
    }
    return nullptr;
}

const PromptAsset& AssetLibrary::get(Stage stage, std::string_view model_key) const {
    if (const auto* a = find(stage, model_key)) return *a;
    throw MissingAsset("no prompt asset for stage " + std::string(to_string(stage)) + ", model " +
                       std::string(model_key));
}

const PromptAsset& AssetLibrary::srp_asset(std::string_view model) const {
    const std::string key = canonical_model_key(model);
    if (const auto* a = find(Stage::SrpTracking, key)) return *a;
    spdlog::warn("no SRP prompt for model '{}'; using the gpt-4-turbo variant", model);
    return get(Stage::SrpTracking, "gpt-4-turbo");
}

void AssetLibrary::put(PromptAsset asset) {
    asset.placeholders = extract_placeholders(asset.template_text);
    for (auto& a : assets_) {
        if (a.stage == asset.stage && a.model_key == asset.model_key) {
            a = std::move(asset);
            return;
        }
    }
    assets_.push_back(std::move(asset));
}

void AssetLibrary::save(const fs::path& dir) const {
    fs::create_directories(dir);
    json manifest = json::array();
    for (const auto& a : assets_) {
        const fs::path file = dir / file_name_for(a);
        std::ofstream out(file, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + file.string());
        out << a.template_text;
        manifest.push_back({{"id", a.id},
                            {"stage", std::string(to_string(a.stage))},
                            {"model_key", a.model_key},
                            {"file", file_name_for(a)},
                            {"placeholders", a.placeholders},
                            {"sha256", sha256_hex(a.template_text)}});
    }
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(2) << '\n';
}

} // namespace ovdst
