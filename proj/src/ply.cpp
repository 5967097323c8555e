#include "compsplat/ply.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace compsplat {

static_assert(std::endian::native == std::endian::little, "PLY I/O assumes a little-endian host");

namespace {

std::size_t type_size(PlyType t) {
    switch (t) {
        case PlyType::int8:
        case PlyType::uint8: return 1;
        case PlyType::int16:
        case PlyType::uint16: return 2;
        case PlyType::int32:
        case PlyType::uint32:
        case PlyType::float32: return 4;
        case PlyType::float64: return 8;
    }
    return 0;
}

const char* type_name(PlyType t) {
    switch (t) {
        case PlyType::int8: return "char";
        case PlyType::uint8: return "uchar";
        case PlyType::int16: return "short";
        case PlyType::uint16: return "ushort";
        case PlyType::int32: return "int";
        case PlyType::uint32: return "uint";
        case PlyType::float32: return "float";
        case PlyType::float64: return "double";
    }
    return "float";
}

PlyType parse_type(const std::string& s, const std::filesystem::path& path) {
    if (s == "char" || s == "int8") return PlyType::int8;
    if (s == "uchar" || s == "uint8") return PlyType::uint8;
    if (s == "short" || s == "int16") return PlyType::int16;
    if (s == "ushort" || s == "uint16") return PlyType::uint16;
    if (s == "int" || s == "int32") return PlyType::int32;
    if (s == "uint" || s == "uint32") return PlyType::uint32;
    if (s == "float" || s == "float32") return PlyType::float32;
    if (s == "double" || s == "float64") return PlyType::float64;
    throw PlyError(path.string() + ": unknown PLY property type '" + s + "'");
}

template <typename T>
double load_as(const char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return static_cast<double>(v);
}

double decode(PlyType t, const char* p) {
    switch (t) {
        case PlyType::int8: return load_as<std::int8_t>(p);
        case PlyType::uint8: return load_as<std::uint8_t>(p);
        case PlyType::int16: return load_as<std::int16_t>(p);
        case PlyType::uint16: return load_as<std::uint16_t>(p);
        case PlyType::int32: return load_as<std::int32_t>(p);
        case PlyType::uint32: return load_as<std::uint32_t>(p);
        case PlyType::float32: return load_as<float>(p);
        case PlyType::float64: return load_as<double>(p);
    }
    return 0.0;
}

template <typename T>
void store_as(double v, char* p) {
    const T x = static_cast<T>(v);
    std::memcpy(p, &x, sizeof(T));
}

void encode(PlyType t, double v, char* p) {
    switch (t) {
        case PlyType::int8: store_as<std::int8_t>(v, p); break;
        case PlyType::uint8: store_as<std::uint8_t>(v, p); break;
        case PlyType::int16: store_as<std::int16_t>(v, p); break;
        case PlyType::uint16: store_as<std::uint16_t>(v, p); break;
        case PlyType::int32: store_as<std::int32_t>(v, p); break;
        case PlyType::uint32: store_as<std::uint32_t>(v, p); break;
        case PlyType::float32: store_as<float>(v, p); break;
        case PlyType::float64: store_as<double>(v, p); break;
    }
}

struct ElementSpec {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> properties;
    bool has_list = false;
};

}  // namespace

int PlyTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < properties.size(); ++i) {
        if (properties[i].name == name) return static_cast<int>(i);
    }
    return -1;
}

int PlyTable::require_column(const std::string& name) const {
    const int c = column(name);
    if (c < 0) throw PlyError("PLY is missing required property '" + name + "'");
    return c;
}

PlyTable read_ply(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw PlyError(path.string() + ": cannot open PLY file");
    std::string line;
    std::getline(in, line);
    if (line.rfind("ply", 0) != 0) throw PlyError(path.string() + ": missing 'ply' magic");

    bool binary = false;
    std::vector<ElementSpec> elements;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        if (key == "end_header") break;
        if (key == "format") {
            std::string fmt;
            ss >> fmt;
            if (fmt == "binary_little_endian") {
                binary = true;
            } else if (fmt == "ascii") {
                binary = false;
            } else {
                throw PlyError(path.string() + ": unsupported PLY format '" + fmt + "'");
            }
        } else if (key == "element") {
            ElementSpec e;
            ss >> e.name >> e.count;
            if (!ss) throw PlyError(path.string() + ": malformed element line '" + line + "'");
            elements.push_back(e);
        } else if (key == "property") {
            if (elements.empty()) throw PlyError(path.string() + ": property before any element");
            std::string type;
            ss >> type;
            if (type == "list") {
                elements.back().has_list = true;
                continue;
            }
            PlyProperty p;
            p.type = parse_type(type, path);
            ss >> p.name;
            elements.back().properties.push_back(p);
        }
    }
    if (!in) throw PlyError(path.string() + ": truncated PLY header");

    PlyTable table;
    bool found = false;
    for (const auto& e : elements) {
        if (e.name != "vertex") {
            if (e.has_list && e.count > 0) {
                throw PlyError(path.string() + ": list properties are not supported (element '" + e.name + "')");
            }
            if (!found) {
                // Skip a fixed-size element that precedes the vertices.
                std::size_t stride = 0;
                for (const auto& p : e.properties) stride += type_size(p.type);
                if (binary) {
                    in.seekg(static_cast<std::streamoff>(stride * e.count), std::ios::cur);
                } else {
                    for (std::size_t i = 0; i < e.count; ++i) std::getline(in, line);
                }
            }
            continue;
        }
        if (e.has_list) throw PlyError(path.string() + ": list properties on vertices are not supported");
        found = true;
        table.properties = e.properties;
        table.rows = e.count;
        const std::size_t cols = e.properties.size();
        table.values.resize(cols * e.count);
        if (binary) {
            std::size_t stride = 0;
            for (const auto& p : e.properties) stride += type_size(p.type);
            std::vector<char> buf(stride * e.count);
            in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
            if (static_cast<std::size_t>(in.gcount()) != buf.size()) {
                throw PlyError(path.string() + ": truncated vertex data");
            }
            const char* p = buf.data();
            for (std::size_t r = 0; r < e.count; ++r) {
                for (std::size_t c = 0; c < cols; ++c) {
                    table.values[r * cols + c] = decode(e.properties[c].type, p);
                    p += type_size(e.properties[c].type);
                }
            }
        } else {
            for (std::size_t r = 0; r < e.count; ++r) {
                for (std::size_t c = 0; c < cols; ++c) {
                    if (!(in >> table.values[r * cols + c])) {
                        throw PlyError(path.string() + ": truncated ASCII vertex data");
                    }
                }
            }
        }
    }
    if (!found) throw PlyError(path.string() + ": no vertex element");
    return table;
}

void write_ply(const std::filesystem::path& path, const PlyTable& table) {
    std::ostringstream header;
    header << "ply\nformat binary_little_endian 1.0\nelement vertex " << table.rows << '\n';
    std::size_t stride = 0;
    for (const auto& p : table.properties) {
        header << "property " << type_name(p.type) << ' ' << p.name << '\n';
        stride += type_size(p.type);
    }
    header << "end_header\n";
    std::vector<char> buf(stride * table.rows);
    char* out = buf.data();
    const std::size_t cols = table.properties.size();
    for (std::size_t r = 0; r < table.rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            encode(table.properties[c].type, table.values[r * cols + c], out);
            out += type_size(table.properties[c].type);
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw PlyError(path.string() + ": cannot open for writing");
    const std::string h = header.str();
    f.write(h.data(), static_cast<std::streamsize>(h.size()));
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw PlyError(path.string() + ": write failed");
}

}  // namespace compsplat
