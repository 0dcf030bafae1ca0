#include "maxmi/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace maxmi {

namespace {

std::string fixed(double v, int prec = 2) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return std::string(buf);
}

}  // namespace

std::string plot_profile_svg(const MIProfile& profile, const PlotMarks& marks,
                             const std::string& title) {
    if (profile.values.empty()) throw Error("plot: empty profile");

    const double width = 800, height = 420;
    const double ml = 60, mr = 20, mt = 34, mb = 42;
    const double pw = width - ml - mr, ph = height - mt - mb;

    const double t0 = profile.t_at(0);
    const double t1 = profile.t_at(profile.values.size() - 1);
    double vmin = *std::min_element(profile.values.begin(), profile.values.end());
    double vmax = *std::max_element(profile.values.begin(), profile.values.end());
    if (vmax - vmin < 1e-9) {
        vmax += 0.5;
        vmin -= 0.5;
    }
    const double pad = 0.06 * (vmax - vmin);
    vmin -= pad;
    vmax += pad;

    auto sx = [&](double t) { return ml + pw * (t - t0) / std::max(1.0, t1 - t0); };
    auto sy = [&](double v) { return mt + ph * (1.0 - (v - vmin) / (vmax - vmin)); };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(width, 0) +
           "\" height=\"" + fixed(height, 0) + "\" viewBox=\"0 0 " + fixed(width, 0) + " " +
           fixed(height, 0) + "\">\n";
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    if (!title.empty())
        svg += "<text x=\"" + fixed(ml) + "\" y=\"20\" font-family=\"monospace\" font-size=\"13\">" +
               title + "</text>\n";

    // axes
    svg += "<line x1=\"" + fixed(ml) + "\" y1=\"" + fixed(mt) + "\" x2=\"" + fixed(ml) +
           "\" y2=\"" + fixed(mt + ph) + "\" stroke=\"black\"/>\n";
    svg += "<line x1=\"" + fixed(ml) + "\" y1=\"" + fixed(mt + ph) + "\" x2=\"" + fixed(ml + pw) +
           "\" y2=\"" + fixed(mt + ph) + "\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i) {
        double v = vmin + (vmax - vmin) * i / 4.0;
        svg += "<text x=\"6\" y=\"" + fixed(sy(v) + 4) +
               "\" font-family=\"monospace\" font-size=\"11\">" + fixed(v, 2) + "</text>\n";
        double t = t0 + (t1 - t0) * i / 4.0;
        svg += "<text x=\"" + fixed(sx(t) - 8) + "\" y=\"" + fixed(height - 16) +
               "\" font-family=\"monospace\" font-size=\"11\">" + fixed(t, 0) + "</text>\n";
    }
    svg += "<text x=\"" + fixed(ml + pw / 2 - 60) + "\" y=\"" + fixed(height - 2) +
           "\" font-family=\"monospace\" font-size=\"11\">normalized time t</text>\n";
    svg += "<text x=\"4\" y=\"" + fixed(mt - 8) +
           "\" font-family=\"monospace\" font-size=\"11\">I(s_t; s_t-dt) nats</text>\n";

    // event marks (dashed) under the concept markers
    for (const auto& [label, idx] : marks.event_marks) {
        double x = sx(idx);
        svg += "<line x1=\"" + fixed(x) + "\" y1=\"" + fixed(mt) + "\" x2=\"" + fixed(x) +
               "\" y2=\"" + fixed(mt + ph) +
               "\" stroke=\"#2e8b57\" stroke-dasharray=\"5,4\" stroke-width=\"1.5\"/>\n";
        svg += "<text x=\"" + fixed(x + 3) + "\" y=\"" + fixed(mt + 12) +
               "\" font-family=\"monospace\" font-size=\"11\" fill=\"#2e8b57\">" + label +
               "</text>\n";
    }
    for (std::size_t c = 0; c < marks.concept_indices.size(); ++c) {
        double x = sx(marks.concept_indices[c]);
        svg += "<line x1=\"" + fixed(x) + "\" y1=\"" + fixed(mt) + "\" x2=\"" + fixed(x) +
               "\" y2=\"" + fixed(mt + ph) + "\" stroke=\"#e07000\" stroke-width=\"1.5\"/>\n";
        svg += "<text x=\"" + fixed(x + 3) + "\" y=\"" + fixed(mt + ph - 6) +
               "\" font-family=\"monospace\" font-size=\"11\" fill=\"#e07000\">k" +
               std::to_string(c) + "</text>\n";
    }

    svg += "<polyline fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < profile.values.size(); ++i) {
        if (i) svg += ' ';
        svg += fixed(sx(profile.t_at(i))) + "," + fixed(sy(profile.values[i]));
    }
    svg += "\"/>\n</svg>\n";
    return svg;
}

}  // namespace maxmi
