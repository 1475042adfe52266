#include <math.h>
#include <stdio.h>
#include "driftsample.h"

#define CHECK(cond) do { if (!(cond)) { fprintf(stderr, "failed: %s (%s)\n", #cond, ds_last_error() ? ds_last_error() : ""); return 1; } } while (0)

int main(void) {
    DsModel *m = NULL;
    CHECK(ds_model_new(1.0, 1.0, 0.75, 1.0, 0.0, -1.0, true, &m) == DS_STATUS_OK);

    double period[] = {0.0, 0.0, 2.0, 2.0};
    DsTrace *t = NULL;
    CHECK(ds_steady_state(m, period, 4, &t) == DS_STATUS_OK);
    double cost = 0.0;
    CHECK(ds_trace_summary(t, &cost, NULL) == DS_STATUS_OK);
    CHECK(fabs(cost - 0.5765607605) < 1e-8);
    CHECK(ds_trace_len(t) == 4);
    ds_trace_free(t);

    DsOptResult *r = NULL;
    CHECK(ds_optimize_onoff(m, 2, &r) == DS_STATUS_OK);
    CHECK(ds_result_value(r) > 0.0);
    char *json = NULL;
    CHECK(ds_result_json(r, &json) == DS_STATUS_OK && json[0] == '{');
    ds_string_free(json);
    ds_result_free(r);

    DsModel *bad = NULL;
    CHECK(ds_model_new(-1.0, 1.0, 0.75, 1.0, 0.0, -1.0, true, &bad) == DS_STATUS_INVALID_PARAMETER);
    CHECK(bad == NULL && ds_last_error() != NULL);

    ds_model_free(m);
    printf("ok\n");
    return 0;
}
