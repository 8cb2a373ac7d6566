#include <stdio.h>
#include <stdlib.h>

#include "hyperpara.h"

int main(int argc, char **argv) {
    if (argc < 2) {
        fprintf(stderr, "usage: smoke SCENARIO\n");
        return 2;
    }
    HpScenario *scenario = NULL;
    if (hp_scenario_load(argv[1], &scenario) != HP_STATUS_OK) {
        fprintf(stderr, "load: %s\n", hp_last_error());
        return 1;
    }
    HpTrace *trace = NULL;
    if (hp_solve(scenario, &trace) != HP_STATUS_OK) {
        fprintf(stderr, "solve: %s\n", hp_last_error());
        hp_scenario_free(scenario);
        return 1;
    }
    size_t len = hp_trace_len(trace);
    size_t cells = hp_trace_cell_count(trace);
    double *u = malloc(cells * sizeof(double));
    HpNorms norms;
    HpBoundsSummary bounds;
    int ok = hp_trace_u(trace, len - 1, u, cells) == HP_STATUS_OK
          && hp_trace_norms(trace, len - 1, &norms) == HP_STATUS_OK
          && hp_trace_bounds(trace, &bounds) == HP_STATUS_OK
          && hp_trace_norms(trace, len, &norms) == HP_STATUS_OUT_OF_RANGE
          && hp_last_error() != NULL;
    double mass = 0.0;
    for (size_t i = 0; i < cells; i++) {
        mass += u[i];
    }
    printf("times=%zu cells=%zu t=%.6f u_l1=%.12e sum_u=%.12e pass=%d\n",
           len, cells, norms.t, norms.u_l1, mass, bounds.pass);
    free(u);
    hp_trace_free(trace);
    hp_scenario_free(scenario);
    return ok && bounds.pass ? 0 : 1;
}
