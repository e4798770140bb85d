#include "gridshare/io.hpp"

#include <fstream>
#include <string>

#include <json.hpp>

#include "gridshare/errors.hpp"

namespace gridshare {

namespace {

using nlohmann::json;

json parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

double need_number(const json& j, const std::string& ctx, const char* field) {
    if (!j.is_object() || !j.contains(field) || !j.at(field).is_number())
        throw ConfigError(ctx + "." + field + ": number required");
    return j.at(field).get<double>();
}

int need_int(const json& j, const std::string& ctx, const char* field) {
    if (!j.is_object() || !j.contains(field) || !j.at(field).is_number_integer())
        throw ConfigError(ctx + "." + field + ": integer required");
    return j.at(field).get<int>();
}

const json& need_array(const json& j, const std::string& ctx, const char* field) {
    if (!j.is_object() || !j.contains(field) || !j.at(field).is_array())
        throw ConfigError(ctx + "." + field + ": array required");
    return j.at(field);
}

}  // namespace

LoadedNetwork load_network(const std::string& path) {
    const json j = parse_file(path);
    LoadedNetwork out;

    double z_base = 1.0, q_base = 1.0;
    if (j.contains("base")) {
        out.s_base_kva = need_number(j.at("base"), "base", "s_base_kva");
        out.v_base_kv = need_number(j.at("base"), "base", "v_base_kv");
        if (out.s_base_kva <= 0.0 || out.v_base_kv <= 0.0)
            throw ConfigError("base: s_base_kva and v_base_kv must be positive");
        z_base = 1000.0 * out.v_base_kv * out.v_base_kv / out.s_base_kva;  // ohm
        q_base = out.s_base_kva;                                           // kvar
    }

    static const json empty;
    const json& slack = j.contains("slack") ? j.at("slack") : empty;
    out.net.v0 = need_number(slack, "slack", "v0");
    out.net.v_min = need_number(slack, "slack", "v_min");
    out.net.v_max = need_number(slack, "slack", "v_max");

    int i = 0;
    for (const json& jb : need_array(j, "", "buses")) {
        const std::string ctx = "buses[" + std::to_string(i++) + "]";
        Bus b;
        b.id = need_int(jb, ctx, "id");
        b.q = need_number(jb, ctx, "q") / q_base;
        out.net.buses.push_back(b);
    }
    i = 0;
    for (const json& jl : need_array(j, "", "lines")) {
        const std::string ctx = "lines[" + std::to_string(i++) + "]";
        Line l;
        l.from = need_int(jl, ctx, "from");
        l.to = need_int(jl, ctx, "to");
        l.r = need_number(jl, ctx, "r") / z_base;
        l.x = need_number(jl, ctx, "x") / z_base;
        out.net.lines.push_back(l);
    }

    build_sensitivities(out.net);  // surfaces topology/domain defects at load time
    return out;
}

LoadedProsumers load_prosumers(const std::string& path) {
    const json j = parse_file(path);
    if (!j.is_array()) throw ConfigError(path + ": prosumer file must be a JSON array");

    LoadedProsumers out;
    int i = 0;
    for (const json& jp : j) {
        const std::string ctx = "prosumers[" + std::to_string(i++) + "]";
        Prosumer p;
        p.id = need_int(jp, ctx, "id");
        p.bus = need_int(jp, ctx, "bus");
        p.g = need_number(jp, ctx, "g_kwh");
        if (p.g < 0.0) throw ConfigError(ctx + ".g_kwh: must be >= 0");

        if (jp.contains("envelope")) {
            Envelope env;
            env.z_lo = need_number(jp.at("envelope"), ctx + ".envelope", "z_lo");
            env.z_hi = need_number(jp.at("envelope"), ctx + ".envelope", "z_hi");
            if (!(env.z_lo <= 0.0 && 0.0 <= env.z_hi))
                throw ConfigError(ctx + ".envelope: needs z_lo <= 0 <= z_hi");
            p.envelope = env;
        }

        int k = 0;
        for (const json& jd : need_array(jp, ctx, "devices")) {
            const std::string dctx = ctx + ".devices[" + std::to_string(k) + "]";
            DeviceUtility dev;
            if (jd.contains("calibrate")) {
                const json& jc = jd.at("calibrate");
                CalibrationNote note;
                note.prosumer_id = p.id;
                note.device_index = k;
                note.pi0 = need_number(jc, dctx + ".calibrate", "pi0");
                note.d0 = need_number(jc, dctx + ".calibrate", "d0");
                note.elasticity = need_number(jc, dctx + ".calibrate", "elasticity");
                if (note.pi0 <= 0.0 || note.d0 <= 0.0 || note.elasticity <= 0.0)
                    throw ConfigError(dctx + ".calibrate: pi0, d0, elasticity must be > 0");
                dev.beta = note.pi0 / (note.elasticity * note.d0);
                dev.alpha = note.pi0 + dev.beta * note.d0;
                note.alpha = dev.alpha;
                note.beta = dev.beta;
                out.calibration.push_back(note);
                dev.d_lo = jd.contains("d_lo") ? need_number(jd, dctx, "d_lo") : 0.0;
                dev.d_hi =
                    jd.contains("d_hi") ? need_number(jd, dctx, "d_hi") : dev.alpha / dev.beta;
            } else {
                dev.alpha = need_number(jd, dctx, "alpha");
                dev.beta = need_number(jd, dctx, "beta");
                dev.d_lo = need_number(jd, dctx, "d_lo");
                dev.d_hi = need_number(jd, dctx, "d_hi");
            }
            if (dev.beta <= 0.0) throw ConfigError(dctx + ".beta: must be > 0");
            if (!(0.0 <= dev.d_lo && dev.d_lo <= dev.d_hi))
                throw ConfigError(dctx + ": needs 0 <= d_lo <= d_hi");
            p.devices.push_back(dev);
            ++k;
        }
        out.prosumers.push_back(std::move(p));
    }
    return out;
}

}  // namespace gridshare
