#include "sgds/errors.hpp"
#include "sgds/sgds_core.hpp"

#include <charconv>
#include <sstream>

namespace sgds {

std::string counters_to_csv(const ActivationCounters& counters) {
    std::ostringstream out;
    out << "layer,unit,F";
    for (ClassId c : counters.classes()) out << ",c" << c;
    out << '\n';
    for (std::size_t layer : counters.target_layers()) {
        const auto global = counters.global(layer);
        for (std::size_t j = 0; j < counters.width(); ++j) {
            out << layer << ',' << j << ',' << global[j];
            for (ClassId c : counters.classes()) out << ',' << counters.per_class(c, layer)[j];
            out << '\n';
        }
    }
    return out.str();
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

std::uint64_t parse_u64(const std::string& s, std::size_t offset) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw FormatError("bad integer '" + s + "'", offset);
    return v;
}

}  // namespace

ActivationCounters counters_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t offset = 0;
    if (!std::getline(in, line)) throw FormatError("empty counter dump", 0);
    const auto header = split_csv(line);
    if (header.size() < 3 || header[0] != "layer" || header[1] != "unit" || header[2] != "F")
        throw FormatError("counter dump header must start with layer,unit,F", 0);
    std::vector<ClassId> classes;
    for (std::size_t i = 3; i < header.size(); ++i) {
        if (header[i].size() < 2 || header[i][0] != 'c') throw FormatError("bad class column " + header[i], 0);
        classes.push_back(static_cast<ClassId>(parse_u64(header[i].substr(1), 0)));
    }
    offset += line.size() + 1;

    struct Row {
        std::size_t layer, unit;
        std::uint64_t f;
        std::vector<std::uint64_t> fc;
        std::size_t offset;
    };
    std::vector<Row> rows;
    std::vector<std::size_t> layers;
    std::size_t width = 0;
    while (std::getline(in, line)) {
        if (line.empty()) {
            offset += 1;
            continue;
        }
        const auto cells = split_csv(line);
        if (cells.size() != header.size()) throw FormatError("counter row has wrong column count", offset);
        Row r{parse_u64(cells[0], offset), parse_u64(cells[1], offset), parse_u64(cells[2], offset), {}, offset};
        for (std::size_t i = 3; i < cells.size(); ++i) r.fc.push_back(parse_u64(cells[i], offset));
        if (layers.empty() || layers.back() != r.layer) layers.push_back(r.layer);
        width = std::max(width, r.unit + 1);
        rows.push_back(std::move(r));
        offset += line.size() + 1;
    }
    if (rows.empty()) throw FormatError("counter dump has no rows", offset);
    if (rows.size() != layers.size() * width) throw FormatError("counter dump is not a full layer x unit grid", offset);

    ActivationCounters counters(layers, width);
    for (ClassId c : classes) counters.add_class(c);
    for (std::size_t li = 0; li < layers.size(); ++li) {
        for (std::size_t ci = 0; ci < classes.size(); ++ci) {
            std::vector<std::uint64_t> row(width);
            for (std::size_t j = 0; j < width; ++j) {
                const Row& r = rows[li * width + j];
                if (r.layer != layers[li] || r.unit != j) throw FormatError("counter rows out of order", r.offset);
                row[j] = r.fc[ci];
            }
            counters.set_counts(classes[ci], layers[li], row);
        }
        for (std::size_t j = 0; j < width; ++j) {
            const Row& r = rows[li * width + j];
            if (counters.global(layers[li])[j] != r.f)
                throw FormatError("F column differs from the sum of class columns", r.offset);
        }
    }
    return counters;
}

}  // namespace sgds
