#include <cmath>
#include <fstream>
#include <set>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "cuci/data_model.hpp"
#include "cuci/errors.hpp"

namespace cuci {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

constexpr std::array<std::string_view, 3> kMatrixKeysCtx{"t_ctx", "a_ctx", "v_ctx"};
constexpr std::array<std::string_view, 3> kMatrixKeysUtt{"t_utt", "a_utt", "v_utt"};

Matrix parse_matrix(const json& j, const std::string& sample_id, std::string_view key, std::size_t expected_cols) {
    if (!j.is_array()) throw SchemaError(fmt::format("sample '{}': field {} is not a list of rows", sample_id, key));
    const std::size_t rows = j.size();
    std::vector<float> values;
    values.reserve(rows * expected_cols);
    std::size_t cols = rows == 0 ? expected_cols : j[0].size();
    for (const auto& row : j) {
        if (!row.is_array() || row.size() != cols)
            throw SchemaError(fmt::format("sample '{}': ragged rows in {}", sample_id, key));
        for (const auto& v : row) {
            if (!v.is_number()) throw DataError(fmt::format("sample '{}': non-numeric entry in {}", sample_id, key));
            const auto x = static_cast<float>(v.get<double>());
            if (!std::isfinite(x)) throw DataError(fmt::format("sample '{}': non-finite value in {}", sample_id, key));
            values.push_back(x);
        }
    }
    if (rows > 0 && cols != expected_cols)
        throw SchemaError(fmt::format("sample '{}': modality {} has dimension {} but manifest declares {}",
                                      sample_id, key.substr(0, 1), cols, expected_cols));
    return Matrix(rows, expected_cols, std::move(values));
}

void write_matrix(std::ostream& os, const Matrix& m) {
    os << '[';
    for (std::size_t r = 0; r < m.rows(); ++r) {
        if (r) os << ',';
        os << '[';
        for (std::size_t c = 0; c < m.cols(); ++c) {
            if (c) os << ',';
            os << fmt::format("{:.9g}", m(r, c));
        }
        os << ']';
    }
    os << ']';
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError(fmt::format("cannot open {}", path.string()));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

DatasetBundle load_dataset(const fs::path& manifest_path) {
    if (!fs::exists(manifest_path)) throw LoadError(fmt::format("missing file {}", manifest_path.string()));
    DatasetBundle bundle;
    Manifest& man = bundle.manifest;
    try {
        const json j = json::parse(read_file(manifest_path));
        man.dims = {j.at("dims").at("t").get<std::size_t>(), j.at("dims").at("a").get<std::size_t>(),
                    j.at("dims").at("v").get<std::size_t>()};
        man.num_classes = j.at("num_classes").get<int>();
        const auto& splits = j.at("splits");
        man.train = splits.value("train", std::vector<std::string>{});
        man.val = splits.value("val", std::vector<std::string>{});
        man.test = splits.value("test", std::vector<std::string>{});
        man.records = j.at("records").get<std::string>();
    } catch (const json::exception& e) {
        throw LoadError(fmt::format("{}: malformed manifest: {}", manifest_path.string(), e.what()));
    }
    if (man.num_classes < 2) throw SchemaError("num_classes must be at least 2");
    if (man.train.empty() && man.val.empty() && man.test.empty()) throw LoadError("no samples");

    std::map<std::string, Split> assignment;
    auto assign = [&](const std::vector<std::string>& ids, Split s) {
        for (const auto& id : ids)
            if (!assignment.emplace(id, s).second)
                throw SchemaError(fmt::format("sample '{}' listed in more than one split", id));
    };
    assign(man.train, Split::Train);
    assign(man.val, Split::Val);
    assign(man.test, Split::Test);

    const fs::path records_path = manifest_path.parent_path() / man.records;
    if (!fs::exists(records_path)) throw LoadError(fmt::format("missing file {}", records_path.string()));
    std::ifstream in(records_path);
    if (!in) throw LoadError(fmt::format("cannot open {}", records_path.string()));

    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(fmt::format("{}:{}: {}", records_path.string(), line_no, e.what()));
        }
        ConversationalSample s;
        try {
            s.id = rec.at("id").get<std::string>();
            s.label = rec.at("label").get<int>();
            if (rec.contains("sar") && !rec["sar"].is_null()) s.sarcasm = rec["sar"].get<int>();
        } catch (const json::exception& e) {
            throw SchemaError(fmt::format("{}:{}: {}", records_path.string(), line_no, e.what()));
        }
        auto it = assignment.find(s.id);
        if (it == assignment.end()) continue;  // not referenced by the manifest
        for (Modality m : kModalities) {
            const auto i = index_of(m);
            const std::string ck(kMatrixKeysCtx[i]);
            const std::string uk(kMatrixKeysUtt[i]);
            if (!rec.contains(uk)) throw SchemaError(fmt::format("sample '{}': missing field {}", s.id, uk));
            s[m].context = rec.contains(ck) ? parse_matrix(rec[ck], s.id, ck, man.dims[m]) : Matrix(0, man.dims[m]);
            s[m].utterance = parse_matrix(rec[uk], s.id, uk, man.dims[m]);
        }
        bundle.samples.push_back(std::move(s));
        bundle.splits.push_back(it->second);
    }
    if (bundle.samples.size() != assignment.size()) {
        std::set<std::string> found;
        for (const auto& s : bundle.samples) found.insert(s.id);
        for (const auto& [id, _] : assignment)
            if (!found.contains(id))
                throw LoadError(fmt::format("sample '{}' listed in manifest but absent from {}", id,
                                            records_path.string()));
    }
    bundle.validate(/*require_train_val=*/false);
    return bundle;
}

DatasetBundle load_dataset_dir(const fs::path& path) {
    if (fs::is_directory(path)) return load_dataset(path / "manifest.json");
    return load_dataset(path);
}

void save_dataset(const DatasetBundle& bundle, const fs::path& dir) {
    fs::create_directories(dir);
    const std::string records_name = bundle.manifest.records.empty() ? "records.jsonl" : bundle.manifest.records;

    json j;
    j["dims"] = {{"t", bundle.manifest.dims.text}, {"a", bundle.manifest.dims.audio}, {"v", bundle.manifest.dims.visual}};
    j["num_classes"] = bundle.manifest.num_classes;
    std::array<std::vector<std::string>, 3> ids;
    for (std::size_t i = 0; i < bundle.samples.size(); ++i)
        ids[static_cast<std::size_t>(bundle.splits[i])].push_back(bundle.samples[i].id);
    j["splits"] = {{"train", ids[0]}, {"val", ids[1]}, {"test", ids[2]}};
    j["records"] = records_name;
    {
        std::ofstream out(dir / "manifest.json");
        if (!out) throw LoadError(fmt::format("cannot write {}", (dir / "manifest.json").string()));
        out << j.dump(2) << '\n';
    }

    std::ofstream out(dir / records_name);
    if (!out) throw LoadError(fmt::format("cannot write {}", (dir / records_name).string()));
    for (const auto& s : bundle.samples) {
        out << "{\"id\":" << json(s.id).dump() << ",\"label\":" << s.label;
        if (s.sarcasm) out << ",\"sar\":" << *s.sarcasm;
        for (Modality m : kModalities) {
            const auto i = index_of(m);
            out << ",\"" << kMatrixKeysCtx[i] << "\":";
            write_matrix(out, s[m].context);
            out << ",\"" << kMatrixKeysUtt[i] << "\":";
            write_matrix(out, s[m].utterance);
        }
        out << "}\n";
    }
}

}  // namespace cuci
