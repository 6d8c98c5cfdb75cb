from rest_framework import serializers


class ComponentCellsField(serializers.Field):
    """A list of CellSets rendered as lists of cell ids."""

    def to_representation(self, value):
        return [cells.to_list() for cells in value]


class FinalClassSerializer(serializers.Serializer):
    cells = serializers.SerializerMethodField()
    components = ComponentCellsField(read_only=True)
    period = serializers.IntegerField()
    permutation = serializers.ListField(child=serializers.IntegerField())
    transitive = serializers.BooleanField()
    mixing = serializers.BooleanField()
    component_mixing = serializers.BooleanField(source='mixing_per_component')

    def get_cells(self, obj):
        return obj.class_cells.to_list()


class DecompositionSerializer(serializers.Serializer):
    graph_id = serializers.CharField()
    classes = FinalClassSerializer(many=True)


class EntropyReportSerializer(serializers.Serializer):
    method = serializers.CharField()
    n_max = serializers.IntegerField()
    epsilon = serializers.FloatField(allow_null=True)
    values = serializers.SerializerMethodField()
    rate = serializers.FloatField()
    reduced_precision = serializers.BooleanField()
    domain = serializers.ListField(child=serializers.IntegerField(), allow_null=True)

    def get_values(self, obj):
        # Path counts stay exact integers of any size
        return [v if isinstance(v, int) else float(v) for v in obj.values]


class TheoremCRowSerializer(serializers.Serializer):
    subdivisions = serializers.IntegerField()
    min_row_size = serializers.IntegerField()
    m = serializers.IntegerField()
    log_m = serializers.FloatField()
    growth_rate = serializers.FloatField()
    epsilon0 = serializers.FloatField()
    reduced_precision = serializers.BooleanField()


class TheoremCStudySerializer(serializers.Serializer):
    base = serializers.DictField()
    epsilon = serializers.FloatField()
    rows = TheoremCRowSerializer(many=True)


class CertificateSerializer(serializers.Serializer):
    matrix = serializers.ListField(child=serializers.ListField(child=serializers.IntegerField()))
    grid = serializers.IntegerField()
    delta = serializers.FloatField()
    eps = serializers.FloatField()
    steps = serializers.IntegerField()
    seed = serializers.IntegerField()
    transitive = serializers.BooleanField()
    orbit_len = serializers.IntegerField()
    orbit_defect_bound = serializers.FloatField()
    max_shadow_dist = serializers.FloatField()
    bound = serializers.FloatField()
    shadowing_delta = serializers.FloatField()
    defect_within_shadowing_delta = serializers.BooleanField()
    shadow_within_eps = serializers.BooleanField()
    verified_by = serializers.CharField()
    precision_loss = serializers.BooleanField()
    net_size = serializers.IntegerField()
    density_ok = serializers.BooleanField()
    uncovered = serializers.ListField(child=serializers.ListField(child=serializers.FloatField()))
    note = serializers.CharField()
    shadow_start = serializers.ListField(
        source='shadow.shadow_start', child=serializers.FloatField(),
    )


class OracleItemSerializer(serializers.Serializer):
    name = serializers.CharField()
    fast = serializers.JSONField()
    oracle = serializers.JSONField()
    agree = serializers.BooleanField()


class OracleReportSerializer(serializers.Serializer):
    source = serializers.CharField()
    n_cells = serializers.IntegerField()
    agree = serializers.BooleanField()
    items = OracleItemSerializer(many=True)
