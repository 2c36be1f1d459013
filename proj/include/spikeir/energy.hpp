#pragma once

#include <string>
#include <vector>

#include "spikeir/model.hpp"

namespace spikeir {

// 32-bit floating point op costs in 45nm.
struct EnergyConstants {
    double e_mac_pj = 4.6;
    double e_ac_pj = 0.9;
};

// Per-block energy: T * (fr * E_AC * OP_AC + E_MAC * OP_MAC), in pJ.
double block_energy(const LayerCount& c, double fr, int time_steps, const EnergyConstants& k = {});

struct EnergyRow {
    std::string block;
    std::string kind;
    long long op_ac = 0;
    long long op_mac = 0;
    int steps = 1;
    double fr = 1.0;
    double energy_pj = 0.0;
};

struct EnergyReport {
    std::vector<EnergyRow> rows;
    double total_pj = 0.0;
    int time_steps = 1;
    EnergyConstants constants;
    std::vector<double> lif_rates; // measured per-Lif firing rates, forward order
};

// Runs the student forward over the samples, measures per-block firing
// rates, classifies the head path as analog and everything after the first
// Lif as spike-driven, and sums block_energy over the layer table.
EnergyReport profile_snn(const ModelGraph& student, const std::vector<Tensor>& samples);

// Non-spiking profile of the same layer table: one pass (T = 1), every
// kernel product a MAC, fr fixed at 1.
EnergyReport profile_ann(const ModelGraph& ann, const Tensor& sample);

// Text table with the counting rules and the 45nm constants in the header.
std::string format_energy_report(const EnergyReport& r, const std::string& title);

// CSV: block,kind,op_ac,op_mac,fr,energy_pj
void write_energy_csv(const EnergyReport& r, const std::string& path);

// {"total_pj": ..., "total_uj": ..., "T": ..., "ratio_vs_ann": ...}
void write_energy_summary_json(const EnergyReport& snn, const EnergyReport& ann, const std::string& path);

} // namespace spikeir
