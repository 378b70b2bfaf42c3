#include <math.h>
#include <stdio.h>
#include "opmean.h"

int main(void) {
    const double a_entries[4] = {1.0, 0.0, 0.0, 4.0};
    const double b_entries[4] = {9.0, 0.0, 0.0, 16.0};
    OmMatrix *a = NULL, *b = NULL, *g = NULL;
    OmMeanSpec *spec = NULL;
    if (om_matrix_new(2, a_entries, &a) != OM_STATUS_OK) return 1;
    if (om_matrix_new(2, b_entries, &b) != OM_STATUS_OK) return 1;
    if (om_mean_spec_from_json("{\"kind\": \"karcher\", \"weights\": [0.5, 0.5]}", &spec) != OM_STATUS_OK) return 1;
    const OmMatrix *inputs[2] = {a, b};
    if (om_mean_evaluate(spec, inputs, 2, 0.0, 0, &g) != OM_STATUS_OK) return 2;
    double out[4];
    om_matrix_entries(g, out, 4);
    printf("%.12f %.12f\n", out[0], out[3]);
    double k = 0.0;
    if (om_kantorovich(0.5, 2.0, &k) != OM_STATUS_INVALID_INPUT) return 3;
    char msg[128];
    om_last_error(msg, sizeof msg);
    printf("%s\n", msg);
    om_matrix_free(g);
    om_matrix_free(a);
    om_matrix_free(b);
    om_mean_spec_free(spec);
    return fabs(out[0] - 3.0) < 1e-9 && fabs(out[3] - 8.0) < 1e-9 ? 0 : 4;
}
