#include "dqaem/io.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

namespace dqaem::io {

using nlohmann::json;

std::string format_double(double value) {
    std::array<char, 64> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    return std::string(buf.data(), res.ptr);
}

namespace {

double parse_double(const std::string& field, int line) {
    double v = 0.0;
    const char* first = field.data();
    const char* last = first + field.size();
    while (first < last && *first == ' ') ++first;
    while (last > first && (last[-1] == ' ' || last[-1] == '\r')) --last;
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last)
        throw IoError("dataset CSV line " + std::to_string(line) + ": cannot parse number '" + field + "'");
    return v;
}

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

void require_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ParameterError(where + ": expected an object");
    for (const auto& [key, _] : j.items())
        if (!allowed.contains(key)) throw ParameterError(where + ": unknown key '" + key + "'");
}

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

Matrix matrix_from_json(const json& j, const std::string& where) {
    if (!j.is_array() || j.empty() || !j.front().is_array()) throw ParameterError(where + ": expected a 2-D array");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j.front().size());
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const json& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols) throw ParameterError(where + ": ragged matrix");
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
    return m;
}

Vector vector_from_json(const json& j, const std::string& where) {
    if (!j.is_array()) throw ParameterError(where + ": expected an array");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    return v;
}

}  // namespace

void write_dataset_csv(const Dataset& data, std::ostream& out) {
    const bool labelled = data.truth.has_value();
    for (int j = 0; j < data.dim(); ++j) out << (j ? "," : "") << "y_" << (j + 1);
    if (labelled) out << ",label";
    out << '\n';
    for (int i = 0; i < data.size(); ++i) {
        for (int j = 0; j < data.dim(); ++j) out << (j ? "," : "") << format_double(data.points(i, j));
        if (labelled) out << ',' << data.truth->labels[static_cast<std::size_t>(i)];
        out << '\n';
    }
}

Dataset read_dataset_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw IoError("dataset CSV: missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split(line);
    int dims = 0;
    bool labelled = false;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "y_" + std::to_string(c + 1)) {
            if (labelled) throw IoError("dataset CSV: label column must come last");
            ++dims;
        } else if (header[c] == "label" && c + 1 == header.size()) {
            labelled = true;
        } else {
            throw IoError("dataset CSV: unexpected header column '" + header[c] + "'");
        }
    }
    if (dims == 0) throw IoError("dataset CSV: no y_ columns");

    std::vector<std::vector<double>> rows;
    std::vector<int> labels;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split(line);
        if (fields.size() != header.size())
            throw IoError("dataset CSV line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) + " fields");
        std::vector<double> row(static_cast<std::size_t>(dims));
        for (int j = 0; j < dims; ++j) row[static_cast<std::size_t>(j)] = parse_double(fields[static_cast<std::size_t>(j)], lineno);
        rows.push_back(std::move(row));
        if (labelled) labels.push_back(static_cast<int>(parse_double(fields.back(), lineno)));
    }
    Dataset data;
    data.points.resize(static_cast<Eigen::Index>(rows.size()), dims);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (int j = 0; j < dims; ++j) data.points(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
    if (labelled) {
        data.truth = GroundTruth{};
        data.truth->labels = std::move(labels);
    }
    return data;
}

json params_to_json(const MfaParams& params) {
    json j;
    j["weights"] = json::array();
    for (Eigen::Index w = 0; w < params.weights.size(); ++w) j["weights"].push_back(params.weights[w]);
    j["means"] = json::array();
    for (const auto& mu : params.means) {
        json v = json::array();
        for (Eigen::Index i = 0; i < mu.size(); ++i) v.push_back(mu[i]);
        j["means"].push_back(v);
    }
    j["loadings"] = json::array();
    for (const auto& l : params.loadings) j["loadings"].push_back(matrix_to_json(l));
    j["noise_cov"] = matrix_to_json(params.noise_cov);
    j["diagonal_noise"] = params.diagonal_noise;
    return j;
}

MfaParams params_from_json(const json& j) {
    require_keys(j, {"weights", "means", "loadings", "noise_cov", "diagonal_noise"}, "params");
    for (const char* key : {"weights", "means", "loadings", "noise_cov"})
        if (!j.contains(key)) throw ParameterError(std::string("params: missing key '") + key + "'");
    MfaParams p;
    p.weights = vector_from_json(j.at("weights"), "params.weights");
    for (const auto& mu : j.at("means")) p.means.push_back(vector_from_json(mu, "params.means"));
    for (const auto& l : j.at("loadings")) p.loadings.push_back(matrix_from_json(l, "params.loadings"));
    p.noise_cov = matrix_from_json(j.at("noise_cov"), "params.noise_cov");
    p.diagonal_noise = j.value("diagonal_noise", true);
    p.validate();
    return p;
}

json dataset_sidecar(const Dataset& data) {
    json j;
    j["seed"] = data.seed;
    j["n"] = data.size();
    if (data.truth && data.truth->params.components() > 0) j["truth"] = params_to_json(data.truth->params);
    return j;
}

void write_trace_csv(const FitTrace& trace, std::ostream& out, bool include_wall_time) {
    out << "iteration,objective,beta,gamma,beads,wall_ms\n";
    for (const auto& rec : trace.iterations) {
        out << rec.iteration << ',' << format_double(rec.objective) << ',' << format_double(rec.beta) << ','
            << format_double(rec.gamma) << ',' << rec.beads << ',' << (include_wall_time ? format_double(rec.wall_ms) : "0")
            << '\n';
    }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void save_dataset(const Dataset& data, const std::filesystem::path& csv, const std::filesystem::path& sidecar) {
    std::ostringstream out;
    write_dataset_csv(data, out);
    write_text(csv, out.str());
    if (!sidecar.empty()) write_text(sidecar, dataset_sidecar(data).dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& csv, const std::filesystem::path& sidecar) {
    std::istringstream in(read_text(csv));
    Dataset data;
    try {
        data = read_dataset_csv(in);
    } catch (const IoError& e) {
        throw IoError(csv.string() + ": " + e.what());
    }
    if (!sidecar.empty()) {
        json j;
        try {
            j = json::parse(read_text(sidecar));
        } catch (const json::parse_error& e) {
            throw IoError(sidecar.string() + ": " + e.what());
        }
        require_keys(j, {"seed", "n", "truth"}, "dataset sidecar");
        data.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("n") && j.at("n").get<int>() != data.size())
            throw IoError(sidecar.string() + ": point count does not match " + csv.string());
        if (j.contains("truth")) {
            if (!data.truth) throw IoError(csv.string() + ": truth parameters given but the CSV has no label column");
            data.truth->params = params_from_json(j.at("truth"));
        }
    }
    // labels alone cannot be scored
    if (data.truth && data.truth->params.components() == 0) data.truth.reset();
    data.validate();
    return data;
}

}  // namespace dqaem::io
