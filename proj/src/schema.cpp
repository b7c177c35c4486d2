#include "hablab/schema.hpp"

#include <algorithm>

#include "hablab/error.hpp"
#include "report_schema.inc"

namespace hablab {

namespace {

using nlohmann::json;

bool has_type(const json& v, const std::string& t) {
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "boolean") return v.is_boolean();
    if (t == "null") return v.is_null();
    if (t == "integer") return v.is_number_integer() || (v.is_number_float() && v.get<double>() == double(std::int64_t(v.get<double>())));
    if (t == "number") return v.is_number();
    return false;
}

const json& resolve(const json& schema, const json& root) {
    auto it = schema.find("$ref");
    if (it == schema.end()) return schema;
    std::string ref = it->get<std::string>();
    if (ref.rfind("#/", 0) != 0) fail(ErrorKind::usage, "schema", "unsupported-ref", ref);
    return root.at(json::json_pointer(ref.substr(1)));
}

void check(const json& v, const json& s_in, const json& root, const std::string& path, std::vector<std::string>& out) {
    const json& s = resolve(s_in, root);
    if (auto t = s.find("type"); t != s.end()) {
        bool ok = false;
        if (t->is_string()) ok = has_type(v, t->get<std::string>());
        else
            for (const auto& x : *t) ok = ok || has_type(v, x.get<std::string>());
        if (!ok) {
            out.push_back(path + ": wrong type, expected " + t->dump());
            return;
        }
    }
    if (auto e = s.find("enum"); e != s.end())
        if (std::find(e->begin(), e->end(), v) == e->end()) out.push_back(path + ": value not in enum");
    if (v.is_number()) {
        if (auto m = s.find("minimum"); m != s.end() && v.get<double>() < m->get<double>()) out.push_back(path + ": below minimum");
        if (auto m = s.find("maximum"); m != s.end() && v.get<double>() > m->get<double>()) out.push_back(path + ": above maximum");
    }
    if (v.is_object()) {
        if (auto r = s.find("required"); r != s.end())
            for (const auto& k : *r)
                if (!v.contains(k.get<std::string>())) out.push_back(path + ": missing " + k.get<std::string>());
        auto props = s.find("properties");
        for (auto it = v.begin(); it != v.end(); ++it) {
            if (props != s.end() && props->contains(it.key())) {
                check(it.value(), (*props)[it.key()], root, path + "/" + it.key(), out);
            } else if (auto a = s.find("additionalProperties"); a != s.end() && a->is_boolean() && !a->get<bool>()) {
                out.push_back(path + ": unexpected key " + it.key());
            }
        }
    }
    if (v.is_array())
        if (auto items = s.find("items"); items != s.end())
            for (std::size_t i = 0; i < v.size(); ++i) check(v[i], *items, root, path + "/" + std::to_string(i), out);
}

}  // namespace

std::vector<std::string> validate_json(const json& instance, const json& schema) {
    std::vector<std::string> out;
    check(instance, schema, schema, "", out);
    return out;
}

const json& report_schema() {
    static const json s = json::parse(kReportSchema);
    return s;
}

}  // namespace hablab
