#include "spikeir/energy.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace spikeir {

double block_energy(const LayerCount& c, double fr, int time_steps, const EnergyConstants& k) {
    if (!(fr >= 0.0 && fr <= 1.0)) throw ContractError("block_energy: fr must be in [0,1]");
    if (time_steps < 1) throw ContractError("block_energy: T must be >= 1");
    return static_cast<double>(time_steps) *
           (fr * k.e_ac_pj * static_cast<double>(c.op_ac) + k.e_mac_pj * static_cast<double>(c.op_mac));
}

namespace {

EnergyReport assemble(const ModelGraph& g, int h, int w, const std::vector<double>& lif_rates) {
    EnergyReport rep;
    rep.time_steps = g.spiking ? g.time_steps : 1;
    rep.lif_rates = lif_rates;
    for (const LayerCount& c : g.describe(h, w)) {
        double fr = 1.0;
        if (c.fr_index >= 0 && c.fr_index < static_cast<int>(lif_rates.size()))
            fr = lif_rates[static_cast<std::size_t>(c.fr_index)];
        EnergyRow row{c.block, c.kind, c.op_ac, c.op_mac, c.steps, fr, block_energy(c, fr, c.steps, rep.constants)};
        rep.total_pj += row.energy_pj;
        rep.rows.push_back(row);
    }
    return rep;
}

} // namespace

EnergyReport profile_snn(const ModelGraph& student, const std::vector<Tensor>& samples) {
    if (!student.spiking) throw ContractError("profile_snn expects a spiking graph");
    if (samples.empty()) throw ContractError("profile_snn requires at least one sample");
    // firing rates averaged over samples, weighted by neuron-step counts
    std::vector<std::int64_t> spikes, totals;
    for (const Tensor& s : samples) {
        InferenceResult r = run_model(student, s);
        if (spikes.empty()) {
            spikes.assign(r.stats.size(), 0);
            totals.assign(r.stats.size(), 0);
        }
        for (std::size_t i = 0; i < r.stats.size(); ++i) {
            spikes[i] += r.stats[i].spike_count;
            totals[i] += r.stats[i].total;
        }
    }
    std::vector<double> rates(spikes.size(), 0.0);
    for (std::size_t i = 0; i < spikes.size(); ++i)
        if (totals[i] > 0) rates[i] = static_cast<double>(spikes[i]) / static_cast<double>(totals[i]);
    return assemble(student, samples[0].dim(2), samples[0].dim(3), rates);
}

EnergyReport profile_ann(const ModelGraph& ann, const Tensor& sample) {
    if (ann.spiking) throw ContractError("profile_ann expects a non-spiking graph");
    return assemble(ann, sample.dim(2), sample.dim(3), {});
}

std::string format_energy_report(const EnergyReport& r, const std::string& title) {
    std::ostringstream os;
    os << title << "\n";
    os << "E_MAC = " << r.constants.e_mac_pj << " pJ, E_AC = " << r.constants.e_ac_pj
       << " pJ (32-bit float, 45nm); E_block = T * (fr * E_AC * OP_AC + E_MAC * OP_MAC)\n";
    os << "counting rules: conv products MAC on analog input, AC on spike input; conv bias adds AC\n";
    os << "  (same fr gate as their conv); normalization and attention multiplies MAC; gate-mean\n";
    os << "  adds AC; upsample 4 MAC per output element; elementwise adds AC; LIF membrane\n";
    os << "  updates not counted; rows with steps=1 run once per forward\n";
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-28s %-9s %12s %12s %5s %8s %16s\n", "block", "kind", "op_ac",
                  "op_mac", "T", "fr", "energy_pj");
    os << buf;
    for (const auto& row : r.rows) {
        std::snprintf(buf, sizeof(buf), "%-28s %-9s %12lld %12lld %5d %8.4f %16.1f\n", row.block.c_str(),
                      row.kind.c_str(), row.op_ac, row.op_mac, row.steps, row.fr, row.energy_pj);
        os << buf;
    }
    std::snprintf(buf, sizeof(buf), "total: %.1f pJ (%.6f uJ), T = %d\n", r.total_pj, r.total_pj * 1e-6,
                  r.time_steps);
    os << buf;
    return os.str();
}

void write_energy_csv(const EnergyReport& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(path + ": cannot open for writing");
    out << "block,kind,op_ac,op_mac,fr,energy_pj\n";
    char buf[256];
    for (const auto& row : r.rows) {
        std::snprintf(buf, sizeof(buf), "%s,%s,%lld,%lld,%.6f,%.4f\n", row.block.c_str(), row.kind.c_str(),
                      row.op_ac, row.op_mac, row.fr, row.energy_pj);
        out << buf;
    }
}

void write_energy_summary_json(const EnergyReport& snn, const EnergyReport& ann, const std::string& path) {
    nlohmann::json j;
    j["total_pj"] = snn.total_pj;
    j["total_uj"] = snn.total_pj * 1e-6;
    j["T"] = snn.time_steps;
    j["ann_total_pj"] = ann.total_pj;
    j["ratio_vs_ann"] = ann.total_pj > 0.0 ? snn.total_pj / ann.total_pj : 0.0;
    std::ofstream out(path);
    if (!out) throw Error(path + ": cannot open for writing");
    out << j.dump(2) << "\n";
}

} // namespace spikeir
